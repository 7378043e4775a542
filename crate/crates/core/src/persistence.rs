//! File formats. Every structured artifact is JSON with reals written to 17
//! significant digits; density grids are CSV and images are binary PGM.
//!
//! Readers validate what they load and reject non-finite numbers, dimension
//! mismatches and non-positive precision entries.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::centroids::EmbeddingSet;
use crate::error::{check_dim, Error, Result};
use crate::geometry::{Centroid, DiagSpd, GridDensity, MetricField};
use crate::hmc::SampleBatch;
use crate::paths::{LatentPath, PathConfig};
use crate::vae::dataset::{DiskRingImage, Shape, PIXELS, SIDE};
use crate::vae::model::{Activation, Dense, VaeModel};
use crate::vae::train::TrainConfig;

/// JSON formatter writing every `f64` as `d.dddddddddddddddde±x`.
#[derive(Clone, Copy, Default)]
struct SeventeenDigits;

impl serde_json::ser::Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// A real in the on-disk notation (17 significant digits).
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Serializes any value with the artifact number format. Non-finite reals
/// become `null` and are rejected again on read.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SeventeenDigits);
    value.serialize(&mut ser).map_err(|e| Error::format("JSON", e))?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

fn parse_json<T: DeserializeOwned>(kind: &'static str, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::format(kind, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

fn check_finite(what: &str, xs: &[f64]) -> Result<()> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what.to_string()));
    }
    Ok(())
}

// embeddings

pub fn embeddings_to_json(set: &EmbeddingSet) -> Result<String> {
    set.validate()?;
    to_json(set)
}

pub fn parse_embeddings(text: &str) -> Result<EmbeddingSet> {
    let set: EmbeddingSet = parse_json("embeddings", text)?;
    set.validate()?;
    Ok(set)
}

pub fn write_embeddings(path: &Path, set: &EmbeddingSet) -> Result<()> {
    write_text(path, &embeddings_to_json(set)?)
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingSet> {
    parse_embeddings(&read_text(path)?)
}

// metric field

#[derive(Serialize, Deserialize)]
struct CentroidFile {
    mu: Vec<f64>,
    inv_cov_diag: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MetricFieldFile {
    dim: usize,
    lambda: f64,
    tau: f64,
    rho: f64,
    centroids: Vec<CentroidFile>,
}

pub fn metric_field_to_json(field: &MetricField) -> Result<String> {
    to_json(&MetricFieldFile {
        dim: field.dim(),
        lambda: field.lambda(),
        tau: field.tau(),
        rho: field.rho(),
        centroids: field
            .centroids()
            .iter()
            .map(|c| CentroidFile {
                mu: c.mu().to_vec(),
                inv_cov_diag: c.inv_cov().entries().to_vec(),
            })
            .collect(),
    })
}

pub fn parse_metric_field(text: &str) -> Result<MetricField> {
    let file: MetricFieldFile = parse_json("metric field", text)?;
    let centroids = file
        .centroids
        .into_iter()
        .map(|c| {
            check_dim(file.dim, c.inv_cov_diag.len())?;
            Centroid::new(c.mu, DiagSpd::new(c.inv_cov_diag)?)
        })
        .collect::<Result<Vec<_>>>()?;
    MetricField::new(file.dim, centroids, file.lambda, file.tau, file.rho)
}

pub fn write_metric_field(path: &Path, field: &MetricField) -> Result<()> {
    write_text(path, &metric_field_to_json(field)?)
}

pub fn read_metric_field(path: &Path) -> Result<MetricField> {
    parse_metric_field(&read_text(path)?)
}

// model checkpoint

/// A trained model with the settings that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: VaeModel,
    pub config: TrainConfig,
    pub loss_history: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DenseFile {
    /// Row-major, `outputs x inputs`.
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl DenseFile {
    fn from_dense(d: &Dense) -> Self {
        DenseFile {
            weight: d.weight.outer_iter().map(|r| r.to_vec()).collect(),
            bias: d.bias.to_vec(),
        }
    }

    fn into_dense(self, name: &str) -> Result<Dense> {
        let rows = self.weight.len();
        let cols = self.weight.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 {
            return Err(Error::format("checkpoint", format!("layer `{name}` has an empty weight matrix")));
        }
        let mut flat = Vec::with_capacity(rows * cols);
        for row in self.weight {
            check_dim(cols, row.len())?;
            flat.extend(row);
        }
        check_dim(rows, self.bias.len())?;
        Ok(Dense {
            weight: ndarray::Array2::from_shape_vec((rows, cols), flat).expect("shape checked above"),
            bias: self.bias.into(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct LayersFile {
    enc_hidden: DenseFile,
    enc_mu: DenseFile,
    enc_log_var: DenseFile,
    dec_hidden: DenseFile,
    dec_out: DenseFile,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    input_dim: usize,
    hidden: usize,
    latent_dim: usize,
    hidden_activation: Activation,
    output_activation: Activation,
    layers: LayersFile,
    config: TrainConfig,
    seed: u64,
    loss_history: Vec<f64>,
}

pub fn checkpoint_to_json(ckpt: &Checkpoint) -> Result<String> {
    let m = &ckpt.model;
    m.validate()?;
    to_json(&CheckpointFile {
        input_dim: m.input_dim(),
        hidden: m.hidden(),
        latent_dim: m.latent_dim(),
        hidden_activation: m.hidden_activation,
        output_activation: m.output_activation,
        layers: LayersFile {
            enc_hidden: DenseFile::from_dense(&m.enc_hidden),
            enc_mu: DenseFile::from_dense(&m.enc_mu),
            enc_log_var: DenseFile::from_dense(&m.enc_log_var),
            dec_hidden: DenseFile::from_dense(&m.dec_hidden),
            dec_out: DenseFile::from_dense(&m.dec_out),
        },
        config: ckpt.config.clone(),
        seed: ckpt.config.seed,
        loss_history: ckpt.loss_history.clone(),
    })
}

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint> {
    let file: CheckpointFile = parse_json("checkpoint", text)?;
    if file.seed != file.config.seed {
        return Err(Error::format("checkpoint", "top-level seed disagrees with the training config"));
    }
    let l = file.layers;
    let model = VaeModel {
        enc_hidden: l.enc_hidden.into_dense("enc_hidden")?,
        enc_mu: l.enc_mu.into_dense("enc_mu")?,
        enc_log_var: l.enc_log_var.into_dense("enc_log_var")?,
        dec_hidden: l.dec_hidden.into_dense("dec_hidden")?,
        dec_out: l.dec_out.into_dense("dec_out")?,
        hidden_activation: file.hidden_activation,
        output_activation: file.output_activation,
    };
    model.validate()?;
    check_dim(file.input_dim, model.input_dim())?;
    check_dim(file.hidden, model.hidden())?;
    check_dim(file.latent_dim, model.latent_dim())?;
    check_finite("loss history", &file.loss_history)?;
    Ok(Checkpoint {
        model,
        config: file.config,
        loss_history: file.loss_history,
    })
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_text(path, &checkpoint_to_json(ckpt)?)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    parse_checkpoint(&read_text(path)?)
}

// HMC samples

fn validate_samples(batch: &SampleBatch) -> Result<()> {
    batch.config.validate()?;
    check_dim(batch.config.n_samples, batch.samples.len())?;
    check_dim(batch.samples.len(), batch.chain_index.len())?;
    if let Some(first) = batch.samples.first() {
        for s in &batch.samples {
            check_dim(first.len(), s.len())?;
            check_finite("sample", s)?;
        }
    }
    if batch.chain_index.iter().any(|&c| c >= batch.chains.len()) {
        return Err(Error::format("samples", "chain index out of range"));
    }
    let totals = batch.totals();
    if totals.accepted > totals.proposed || !(0.0..=1.0).contains(&batch.acceptance_rate) {
        return Err(Error::format("samples", "acceptance counts are inconsistent"));
    }
    if (totals.acceptance_rate() - batch.acceptance_rate).abs() > 1e-12 {
        return Err(Error::format(
            "samples",
            format!(
                "acceptance rate {} does not match the recorded counts ({})",
                batch.acceptance_rate,
                totals.acceptance_rate()
            ),
        ));
    }
    Ok(())
}

pub fn samples_to_json(batch: &SampleBatch) -> Result<String> {
    validate_samples(batch)?;
    to_json(batch)
}

pub fn parse_samples(text: &str) -> Result<SampleBatch> {
    let batch: SampleBatch = parse_json("samples", text)?;
    validate_samples(&batch)?;
    Ok(batch)
}

pub fn write_samples(path: &Path, batch: &SampleBatch) -> Result<()> {
    write_text(path, &samples_to_json(batch)?)
}

pub fn read_samples(path: &Path) -> Result<SampleBatch> {
    parse_samples(&read_text(path)?)
}

// paths

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathKind {
    Affine,
    Potential,
    Geodesic,
}

/// An interpolation as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub kind: PathKind,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub n_points: usize,
    pub points: LatentPath,
    /// Objective values recorded by the optimizer (empty for affine paths).
    pub energies: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<PathConfig>,
}

fn validate_path(p: &PathRecord) -> Result<()> {
    check_dim(p.n_points, p.points.len())?;
    check_dim(p.points.dim(), p.start.len())?;
    check_dim(p.points.dim(), p.end.len())?;
    check_finite("path energies", &p.energies)?;
    if p.points.start() != p.start.as_slice() || p.points.end() != p.end.as_slice() {
        return Err(Error::format("path", "endpoints do not match the first and last points"));
    }
    if let Some(cfg) = &p.config {
        cfg.validate()?;
    }
    Ok(())
}

pub fn path_to_json(p: &PathRecord) -> Result<String> {
    validate_path(p)?;
    to_json(p)
}

pub fn parse_path(text: &str) -> Result<PathRecord> {
    let p: PathRecord = parse_json("path", text)?;
    validate_path(&p)?;
    Ok(p)
}

pub fn write_path(path: &Path, p: &PathRecord) -> Result<()> {
    write_text(path, &path_to_json(p)?)
}

pub fn read_path(path: &Path) -> Result<PathRecord> {
    parse_path(&read_text(path)?)
}

// image dataset

#[derive(Serialize, Deserialize)]
struct ImageFile {
    label: Shape,
    center: (i32, i32),
    outer_radius: f64,
    thickness: f64,
    /// 1024 characters `0` or `1`, row-major.
    pixels: String,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    side: usize,
    images: Vec<ImageFile>,
}

pub fn dataset_to_json(images: &[DiskRingImage]) -> Result<String> {
    let images = images
        .iter()
        .map(|img| {
            check_dim(PIXELS, img.pixels.len())?;
            let pixels = img
                .pixels
                .iter()
                .map(|&p| match p {
                    0 => Ok('0'),
                    1 => Ok('1'),
                    other => Err(Error::format("dataset", format!("pixel value {other} is not binary"))),
                })
                .collect::<Result<String>>()?;
            Ok(ImageFile {
                label: img.label,
                center: img.center,
                outer_radius: img.outer_radius,
                thickness: img.thickness,
                pixels,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    to_json(&DatasetFile { side: SIDE, images })
}

pub fn parse_dataset(text: &str) -> Result<Vec<DiskRingImage>> {
    let file: DatasetFile = parse_json("dataset", text)?;
    check_dim(SIDE, file.side)?;
    file.images
        .into_iter()
        .map(|f| {
            check_dim(PIXELS, f.pixels.len())?;
            let pixels = f
                .pixels
                .bytes()
                .map(|b| match b {
                    b'0' => Ok(0),
                    b'1' => Ok(1),
                    _ => Err(Error::format("dataset", "pixels must be a string of 0 and 1")),
                })
                .collect::<Result<Vec<u8>>>()?;
            check_finite("image parameters", &[f.outer_radius, f.thickness])?;
            Ok(DiskRingImage {
                pixels,
                label: f.label,
                center: f.center,
                outer_radius: f.outer_radius,
                thickness: f.thickness,
            })
        })
        .collect()
}

pub fn write_dataset(path: &Path, images: &[DiskRingImage]) -> Result<()> {
    write_text(path, &dataset_to_json(images)?)
}

pub fn read_dataset(path: &Path) -> Result<Vec<DiskRingImage>> {
    parse_dataset(&read_text(path)?)
}

// density grid

/// One CSV row: a cell center, the volume element there and the cell's mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub x: f64,
    pub y: f64,
    pub sqrt_det_g: f64,
    pub mass: f64,
}

pub const GRID_HEADER: [&str; 4] = ["x", "y", "sqrt_det_g", "mass"];

/// Rows in file order: x index outer, y index inner.
pub fn grid_rows(grid: &GridDensity) -> Vec<GridRow> {
    let n = grid.resolution();
    let mut rows = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let [x, y] = grid.cell_center(i, j);
            rows.push(GridRow {
                x,
                y,
                sqrt_det_g: grid.value(i, j),
                mass: grid.mass(i, j),
            });
        }
    }
    rows
}

pub fn density_grid_to_csv(rows: &[GridRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(GRID_HEADER).map_err(|e| Error::format("CSV", e))?;
    for r in rows {
        check_finite("grid row", &[r.x, r.y, r.sqrt_det_g, r.mass])?;
        w.write_record([r.x, r.y, r.sqrt_det_g, r.mass].map(format_real))
            .map_err(|e| Error::format("CSV", e))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format("CSV", e))?;
    Ok(String::from_utf8(bytes).expect("formatted reals are ASCII"))
}

pub fn parse_density_grid(text: &str) -> Result<Vec<GridRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| Error::format("density grid", e))?;
    if header.iter().ne(GRID_HEADER) {
        return Err(Error::format(
            "density grid",
            format!("header must be `{}`", GRID_HEADER.join(",")),
        ));
    }
    let rows = r
        .deserialize()
        .map(|row| row.map_err(|e| Error::format("density grid", e)))
        .collect::<Result<Vec<GridRow>>>()?;
    for row in &rows {
        check_finite("density grid", &[row.x, row.y, row.sqrt_det_g, row.mass])?;
    }
    Ok(rows)
}

pub fn write_density_grid(path: &Path, grid: &GridDensity) -> Result<()> {
    write_text(path, &density_grid_to_csv(&grid_rows(grid))?)
}

pub fn read_density_grid(path: &Path) -> Result<Vec<GridRow>> {
    parse_density_grid(&read_text(path)?)
}

// PGM images

/// Binary (P5) greyscale image with maxval 255.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Pgm {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("pgm", "width and height must be positive"));
        }
        check_dim(width * height, pixels.len())?;
        Ok(Pgm { width, height, pixels })
    }

    /// A 32x32 image of a binary dataset image (0 or 255).
    pub fn from_binary(img: &DiskRingImage) -> Result<Self> {
        Pgm::new(SIDE, SIDE, img.pixels.iter().map(|&p| if p > 0 { 255 } else { 0 }).collect())
    }

    /// A 32x32 image of decoder probabilities, scaled by 255 and rounded
    /// half to even.
    pub fn from_probabilities(probs: &[f64]) -> Result<Self> {
        check_dim(PIXELS, probs.len())?;
        check_finite("image", probs)?;
        Pgm::new(SIDE, SIDE, probs.iter().map(|&p| probability_to_byte(p)).collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Parses the exact layout [`Pgm::to_bytes`] writes: single newlines,
    /// one space between the dimensions, no comments, maxval 255.
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let bad = |reason: &str| Error::format("PGM", reason.to_string());
        let mut fields = Vec::with_capacity(3);
        let mut pos = 0;
        for terminator in [b'\n', b' ', b'\n', b'\n'] {
            let len = bytes[pos..]
                .iter()
                .position(|&b| b == terminator)
                .ok_or_else(|| bad("truncated header"))?;
            fields.push(&bytes[pos..pos + len]);
            pos += len + 1;
        }
        if fields[0] != b"P5" {
            return Err(bad("magic number must be P5"));
        }
        let number = |f: &[u8]| -> Result<usize> {
            if f.is_empty() || !f.iter().all(u8::is_ascii_digit) || (f.len() > 1 && f[0] == b'0') {
                return Err(bad("header numbers must be plain decimal"));
            }
            std::str::from_utf8(f)
                .expect("ASCII digits")
                .parse()
                .map_err(|_| bad("header number out of range"))
        };
        let (width, height, maxval) = (number(fields[1])?, number(fields[2])?, number(fields[3])?);
        if maxval != 255 {
            return Err(bad("maxval must be 255"));
        }
        let payload = &bytes[pos..];
        if payload.len() != width * height {
            return Err(Error::format(
                "PGM",
                format!("payload has {} bytes, expected {}", payload.len(), width * height),
            ));
        }
        Pgm::new(width, height, payload.to_vec())
    }
}

pub fn probability_to_byte(p: f64) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0).round_ties_even() as u8
}

pub fn write_pgm(path: &Path, img: &Pgm) -> Result<()> {
    fs::write(path, img.to_bytes())?;
    Ok(())
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    Pgm::parse(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::centroids::EmbeddingRecord;
    use crate::geometry::{density_grid, Box2};
    use crate::hmc::{hmc_sample, ChainInit, HmcConfig};
    use crate::paths::{affine_interpolation, minimize_potential_path};
    use crate::vae::dataset::generate_toy_dataset;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_wells() -> MetricField {
        let a = Centroid::new(vec![-1.0, 0.0], DiagSpd::new(vec![2.0, 0.5]).unwrap()).unwrap();
        let b = Centroid::new(vec![1.0, 0.5], DiagSpd::new(vec![0.3, 3.0]).unwrap()).unwrap();
        MetricField::new(2, vec![a, b], 1e-2, 0.1, 0.8).unwrap()
    }

    #[test]
    fn all_zero_image_golden_bytes() {
        let img = Pgm::new(32, 32, vec![0; 1024]).unwrap();
        let bytes = img.to_bytes();
        assert_eq!(&bytes[..13], b"P5\n32 32\n255\n");
        assert_eq!(bytes.len(), 13 + 1024);
        assert!(bytes[13..].iter().all(|&b| b == 0));
        assert_eq!(Pgm::parse(&bytes).unwrap(), img);
    }

    #[test]
    fn probabilities_round_half_to_even() {
        // 0.5 * 255 = 127.5 sits exactly between two bytes
        assert_eq!(probability_to_byte(0.5), 128);
        assert_eq!(probability_to_byte(1.5 / 255.0), 2);
        assert_eq!(probability_to_byte(2.5 / 255.0), 2);
        assert_eq!(probability_to_byte(0.0), 0);
        assert_eq!(probability_to_byte(1.0), 255);
        assert_eq!(probability_to_byte(1.2), 255);
    }

    #[test]
    fn binary_images_use_0_and_255() {
        let img = &generate_toy_dataset(1, 0)[0];
        let pgm = Pgm::from_binary(img).unwrap();
        assert!(pgm.pixels.iter().all(|&p| p == 0 || p == 255));
        assert_eq!(pgm.pixels.iter().filter(|&&p| p == 255).count(), img.pixels.iter().filter(|&&p| p == 1).count());
    }

    #[test]
    fn malformed_pgm_is_rejected() {
        let good = Pgm::new(32, 32, vec![7; 1024]).unwrap().to_bytes();
        assert!(Pgm::parse(&good[..good.len() - 1]).is_err());
        let mut extra = good.clone();
        extra.push(0);
        assert!(Pgm::parse(&extra).is_err());
        let mut p2 = good.clone();
        p2[1] = b'2';
        assert!(Pgm::parse(&p2).is_err());
        let mut maxval = b"P5\n32 32\n254\n".to_vec();
        maxval.extend(vec![0; 1024]);
        assert!(Pgm::parse(&maxval).is_err());
        assert!(Pgm::parse(b"P5\n").is_err());
    }

    #[test]
    fn reals_are_written_with_17_significant_digits() {
        assert_eq!(format_real(0.1), "1.0000000000000001e-1");
        assert_eq!(format_real(-2.0), "-2.0000000000000000e0");
        let json = to_json(&vec![0.1, 1e300]).unwrap();
        assert_eq!(json, "[1.0000000000000001e-1,1.0000000000000001e300]\n");
    }

    #[test]
    fn metric_field_round_trip_and_layout() {
        let field = two_wells();
        let json = metric_field_to_json(&field).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["dim", "lambda", "tau", "rho", "centroids"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(v["centroids"][0].get("inv_cov_diag").is_some());
        assert_eq!(parse_metric_field(&json).unwrap(), field);
    }

    #[test]
    fn zero_precision_entry_is_rejected() {
        let json = r#"{"dim":2,"lambda":0.01,"tau":0.0,"rho":1.0,
            "centroids":[{"mu":[0.0,0.0],"inv_cov_diag":[1.0,0.0]}]}"#;
        assert!(matches!(
            parse_metric_field(json),
            Err(Error::NotPositiveDefinite { index: 1, .. })
        ));
    }

    #[test]
    fn inconsistent_metric_files_are_rejected() {
        let wrong_dim = r#"{"dim":3,"lambda":0.01,"tau":0.0,"rho":1.0,
            "centroids":[{"mu":[0.0,0.0],"inv_cov_diag":[1.0,1.0]}]}"#;
        assert!(matches!(parse_metric_field(wrong_dim), Err(Error::DimensionMismatch { .. })));
        let nan = r#"{"dim":1,"lambda":null,"tau":0.0,"rho":1.0,"centroids":[]}"#;
        assert!(parse_metric_field(nan).is_err());
        let zero_lambda = r#"{"dim":1,"lambda":0.0,"tau":0.0,"rho":1.0,"centroids":[]}"#;
        assert!(parse_metric_field(zero_lambda).is_err());
        assert!(parse_metric_field("{").is_err());
    }

    #[test]
    fn non_finite_values_do_not_survive_a_round_trip() {
        let set = EmbeddingSet {
            dim: 1,
            records: vec![EmbeddingRecord {
                id: "a".into(),
                mu: vec![f64::NAN],
                log_var: vec![0.0],
            }],
        };
        assert!(embeddings_to_json(&set).is_err());
        let json = to_json(&set).unwrap();
        assert!(json.contains("null"));
        assert!(parse_embeddings(&json).is_err());
    }

    #[test]
    fn samples_round_trip_and_count_checks() {
        let cfg = HmcConfig {
            n_samples: 6,
            chain_length: 5,
            record_trace: true,
            ..Default::default()
        };
        let batch = hmc_sample(&two_wells(), &cfg).unwrap();
        let json = samples_to_json(&batch).unwrap();
        assert_eq!(parse_samples(&json).unwrap(), batch);

        let mut tampered = batch.clone();
        tampered.acceptance_rate = (tampered.acceptance_rate + 0.5) % 1.0;
        assert!(parse_samples(&to_json(&tampered).unwrap()).is_err());
        let mut short = batch;
        short.samples.pop();
        assert!(parse_samples(&to_json(&short).unwrap()).is_err());
    }

    #[test]
    fn paths_round_trip() {
        let field = two_wells();
        let cfg = PathConfig {
            n_points: 12,
            max_iters: 30,
            ..Default::default()
        };
        let opt = minimize_potential_path(&field, &[-1.0, 0.0], &[1.0, 0.5], &cfg).unwrap();
        let rec = PathRecord {
            kind: PathKind::Potential,
            start: vec![-1.0, 0.0],
            end: vec![1.0, 0.5],
            n_points: 12,
            points: opt.path.clone(),
            energies: opt.energies.clone(),
            iterations: opt.iterations,
            converged: opt.converged,
            config: Some(cfg),
        };
        assert_eq!(parse_path(&path_to_json(&rec).unwrap()).unwrap(), rec);

        let mut wrong_end = rec.clone();
        wrong_end.end = vec![0.0, 0.0];
        assert!(path_to_json(&wrong_end).is_err());
        assert!(parse_path(&to_json(&wrong_end).unwrap()).is_err());
        let affine = PathRecord {
            kind: PathKind::Affine,
            points: affine_interpolation(&[0.0, 0.0], &[1.0, 1.0], 5).unwrap(),
            start: vec![0.0, 0.0],
            end: vec![1.0, 1.0],
            n_points: 5,
            energies: vec![],
            iterations: 0,
            converged: true,
            config: None,
        };
        let json = path_to_json(&affine).unwrap();
        assert!(json.contains("\"kind\":\"affine\""));
        assert_eq!(parse_path(&json).unwrap(), affine);
    }

    #[test]
    fn dataset_round_trip() {
        let data = generate_toy_dataset(10, 4);
        assert_eq!(parse_dataset(&dataset_to_json(&data).unwrap()).unwrap(), data);
        let broken = dataset_to_json(&data).unwrap().replacen("\"pixels\":\"0", "\"pixels\":\"2", 1);
        assert!(parse_dataset(&broken).is_err());
    }

    #[test]
    fn density_grid_csv_layout_and_round_trip() {
        let field = MetricField::flat(2, 1.0, 0.0).unwrap();
        let grid = density_grid(&field, Box2::new((0.0, 1.0), (0.0, 2.0)).unwrap(), 2).unwrap();
        let rows = grid_rows(&grid);
        let csv = density_grid_to_csv(&rows).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x,y,sqrt_det_g,mass");
        assert_eq!(lines.len(), 5);
        // x outer, y inner
        assert!(lines[1].starts_with("2.5000000000000000e-1,5.0000000000000000e-1,"));
        assert!(lines[2].starts_with("2.5000000000000000e-1,1.5000000000000000e0,"));
        assert_eq!(parse_density_grid(&csv).unwrap(), rows);
        assert!(parse_density_grid("a,b\n1,2\n").is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = VaeModel::new_random(20, 6, 2, &mut ChaCha8Rng::seed_from_u64(3));
        let ckpt = Checkpoint {
            model,
            config: TrainConfig {
                seed: 11,
                ..Default::default()
            },
            loss_history: vec![3.5, 2.25],
        };
        let json = checkpoint_to_json(&ckpt).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["layers"]["enc_hidden"]["weight"].as_array().unwrap().len(), 6);
        assert_eq!(v["layers"]["enc_hidden"]["weight"][0].as_array().unwrap().len(), 20);
        assert_eq!(v["seed"], 11);
        assert_eq!(parse_checkpoint(&json).unwrap(), ckpt);
        let ragged = json.replacen("]],\"bias\"", ",1.0]],\"bias\"", 1);
        assert!(parse_checkpoint(&ragged).is_err());
    }

    #[test]
    fn files_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("field.json");
        write_metric_field(&p, &two_wells()).unwrap();
        assert_eq!(read_metric_field(&p).unwrap(), two_wells());
        let missing = read_metric_field(&dir.path().join("nope.json")).unwrap_err();
        assert!(missing.is_io());
        let img = dir.path().join("a.pgm");
        let pgm = Pgm::from_probabilities(&vec![0.25; 1024]).unwrap();
        write_pgm(&img, &pgm).unwrap();
        assert_eq!(read_pgm(&img).unwrap(), pgm);
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e6..1e6f64, any::<f64>().prop_filter("finite", |x| x.is_finite())]
    }

    proptest! {
        #[test]
        fn embeddings_round_trip(
            dim in 1usize..4,
            raw in prop::collection::vec((finite(), finite()), 0..30),
        ) {
            let records = raw
                .chunks(dim)
                .filter(|c| c.len() == dim)
                .enumerate()
                .map(|(i, c)| EmbeddingRecord {
                    id: format!("id-{i}"),
                    mu: c.iter().map(|p| p.0).collect(),
                    log_var: c.iter().map(|p| p.1).collect(),
                })
                .collect();
            let set = EmbeddingSet::new(dim, records).unwrap();
            prop_assert_eq!(parse_embeddings(&embeddings_to_json(&set).unwrap()).unwrap(), set);
        }

        #[test]
        fn metric_fields_round_trip(
            wells in prop::collection::vec(((-5.0..5.0f64, -5.0..5.0f64), (1e-6..1e3f64, 1e-6..1e3f64)), 0..6),
            lambda in 1e-9..10.0f64,
            tau in 0.0..2.0f64,
            rho in 1e-3..10.0f64,
        ) {
            let centroids = wells
                .into_iter()
                .map(|((a, b), (s, t))| Centroid::new(vec![a, b], DiagSpd::new(vec![s, t]).unwrap()).unwrap())
                .collect();
            let field = MetricField::new(2, centroids, lambda, tau, rho).unwrap();
            prop_assert_eq!(parse_metric_field(&metric_field_to_json(&field).unwrap()).unwrap(), field);
        }

        #[test]
        fn samples_round_trip_for_any_seed(seed in any::<u64>(), n in 1usize..5, eps in 0.0..0.5f64) {
            let cfg = HmcConfig {
                n_samples: n,
                chain_length: 3,
                n_leapfrog: 2,
                step_size: eps,
                seed,
                init: ChainInit::Point(vec![0.1, -0.2]),
                record_trace: false,
            };
            let batch = hmc_sample(&two_wells(), &cfg).unwrap();
            prop_assert_eq!(parse_samples(&samples_to_json(&batch).unwrap()).unwrap(), batch);
        }

        #[test]
        fn paths_round_trip_for_random_points(
            pts in prop::collection::vec((finite(), finite()), 2..20),
            energies in prop::collection::vec(finite(), 0..10),
        ) {
            let points: Vec<Vec<f64>> = pts.iter().map(|&(a, b)| vec![a, b]).collect();
            let rec = PathRecord {
                kind: PathKind::Geodesic,
                start: points[0].clone(),
                end: points[points.len() - 1].clone(),
                n_points: points.len(),
                points: LatentPath::new(points).unwrap(),
                energies,
                iterations: 7,
                converged: false,
                config: None,
            };
            prop_assert_eq!(parse_path(&path_to_json(&rec).unwrap()).unwrap(), rec);
        }

        #[test]
        fn grid_rows_round_trip(rows in prop::collection::vec((finite(), finite(), 0.0..1e9f64, 0.0..1.0f64), 0..40)) {
            let rows: Vec<GridRow> = rows
                .into_iter()
                .map(|(x, y, sqrt_det_g, mass)| GridRow { x, y, sqrt_det_g, mass })
                .collect();
            prop_assert_eq!(parse_density_grid(&density_grid_to_csv(&rows).unwrap()).unwrap(), rows);
        }

        #[test]
        fn pgm_round_trip(w in 1usize..40, h in 1usize..40, fill in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(fill);
            let pixels: Vec<u8> = (0..w * h).map(|_| rand::Rng::random(&mut rng)).collect();
            let img = Pgm::new(w, h, pixels).unwrap();
            prop_assert_eq!(Pgm::parse(&img.to_bytes()).unwrap(), img);
        }

        #[test]
        fn checkpoints_round_trip(seed in any::<u64>(), hidden in 1usize..6, latent in 1usize..3) {
            let model = VaeModel::new_random(7, hidden, latent, &mut ChaCha8Rng::seed_from_u64(seed));
            let ckpt = Checkpoint { model, config: TrainConfig { seed, hidden, latent_dim: latent, ..Default::default() }, loss_history: vec![1.0 / 3.0] };
            prop_assert_eq!(parse_checkpoint(&checkpoint_to_json(&ckpt).unwrap()).unwrap(), ckpt);
        }
    }
}
