//! Command-line front end: each subcommand reads its inputs from files, runs
//! one pipeline stage and writes its result to the paths given by flags.
//! Progress goes to standard error.

mod config;
mod error;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Deserialize;

use riemann_latent::centroids::{build_metric_field, DEFAULT_LAMBDA};
use riemann_latent::geometry::{density_grid, Box2, MetricField};
use riemann_latent::hmc::{acceptance_diagnostics, hmc_sample, ChainInit, HmcConfig};
use riemann_latent::paths::{affine_interpolation, geodesic_path, minimize_potential_path, PathConfig};
use riemann_latent::persistence::{self as io, Checkpoint, PathKind, PathRecord, Pgm};
use riemann_latent::vae::{embed_dataset, generate_toy_dataset, pullback_report, train, TrainConfig, VaeModel};

pub use config::FileConfig;
pub use error::CliError;

/// Environment variable consulted when `--threads` is not given.
pub const THREADS_ENV: &str = "RIEMANN_LATENT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "riemann-latent", version, about = "Riemannian geometry of VAE latent spaces")]
pub struct Cli {
    /// Seed for every random choice of the subcommand.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for parallel sampling [env: RIEMANN_LATENT_THREADS].
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// TOML file with defaults; flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Only report warnings and errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the disks-and-rings image dataset.
    GenData(GenDataArgs),
    /// Train the toy VAE on a generated dataset.
    Train(TrainArgs),
    /// Encode a dataset with a trained model.
    Embed(EmbedArgs),
    /// Select centroids among embeddings and write the metric field.
    BuildMetric(BuildMetricArgs),
    /// Draw samples from the Riemannian uniform distribution with HMC.
    Sample(SampleArgs),
    /// Potential-minimizing (or affine) interpolation between two points.
    Interpolate(PathArgs),
    /// Discrete geodesic between two points.
    Geodesic(PathArgs),
    /// Tabulate the normalized volume element on a 2-D grid as CSV.
    DensityGrid(DensityGridArgs),
    /// Compare the decoder pull-back metric with the posterior precisions.
    DiagnosePullback(DiagnosePullbackArgs),
}

/// Copies every unset option of `self` from `other`.
trait Merge {
    fn merge(&mut self, other: Self);
}

macro_rules! merge_fields {
    ($ty:ty { $($opt:ident),* $(; $($flag:ident),*)? }) => {
        impl Merge for $ty {
            fn merge(&mut self, other: Self) {
                $( if self.$opt.is_none() { self.$opt = other.$opt; } )*
                $( $( self.$flag |= other.$flag; )* )?
            }
        }
    };
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataArgs {
    /// Number of images [default: 5000].
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}
merge_fields!(GenDataArgs { n, out });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    /// Dataset written by gen-data.
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// [default: 100]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Weight of the KL term [default: 1].
    #[arg(long)]
    pub beta: Option<f64>,
    /// [default: 2]
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Adam learning rate [default: 0.001].
    #[arg(long)]
    pub lr: Option<f64>,
    /// [default: 100]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Hidden layer width [default: 400].
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}
merge_fields!(TrainArgs { data, epochs, beta, latent_dim, lr, batch_size, hidden, out });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedArgs {
    /// Checkpoint written by train.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}
merge_fields!(EmbedArgs { model, data, out });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildMetricArgs {
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
    /// Number of centroids [default: 100].
    #[arg(long)]
    pub k: Option<usize>,
    /// Scale of the regularizing identity term [default: 0.01].
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Decay rate of the identity term [default: 0].
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}
merge_fields!(BuildMetricArgs { embeddings, k, lambda, tau, out });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleArgs {
    #[arg(long, value_name = "FILE")]
    pub metric: Option<PathBuf>,
    /// Number of samples, one chain each [default: 1].
    #[arg(long)]
    pub n: Option<usize>,
    /// Metropolis steps per chain [default: 100].
    #[arg(long)]
    pub chain_length: Option<usize>,
    /// Leapfrog steps per proposal [default: 10].
    #[arg(long)]
    pub n_leapfrog: Option<usize>,
    /// Leapfrog step size [default: 0.01].
    #[arg(long)]
    pub step_size: Option<f64>,
    /// `random-centroid` or a comma-separated point [default: random-centroid].
    #[arg(long)]
    pub init: Option<String>,
    /// Also store every Metropolis decision in the output.
    #[arg(long)]
    pub trace: bool,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Checkpoint whose decoder renders each sample.
    #[arg(long, value_name = "FILE", requires = "images_out")]
    pub decode_with: Option<PathBuf>,
    /// Directory for the decoded PGM images.
    #[arg(long, value_name = "DIR", requires = "decode_with")]
    pub images_out: Option<PathBuf>,
}
merge_fields!(SampleArgs { metric, n, chain_length, n_leapfrog, step_size, init, out, decode_with, images_out; trace });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathArgs {
    #[arg(long, value_name = "FILE")]
    pub metric: Option<PathBuf>,
    /// Start point, comma-separated.
    #[arg(long, allow_hyphen_values = true)]
    pub from: Option<String>,
    /// End point, comma-separated.
    #[arg(long, allow_hyphen_values = true)]
    pub to: Option<String>,
    /// Number of path points including the endpoints [default: 50].
    #[arg(long)]
    pub points: Option<usize>,
    /// Weight of the spacing term of potential paths [default: 1].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// [default: 2000]
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Initial gradient step [default: 0.01].
    #[arg(long)]
    pub init_step: Option<f64>,
    /// Relative energy decrease below which descent stops [default: 1e-8].
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Write the straight line instead of optimizing (interpolate only).
    #[arg(long)]
    pub affine: bool,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Checkpoint whose decoder renders each path point.
    #[arg(long, value_name = "FILE", requires = "images_out")]
    pub decode_with: Option<PathBuf>,
    /// Directory for the decoded PGM images.
    #[arg(long, value_name = "DIR", requires = "decode_with")]
    pub images_out: Option<PathBuf>,
}
merge_fields!(PathArgs { metric, from, to, points, alpha, max_iters, init_step, tolerance, out, decode_with, images_out; affine });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityGridArgs {
    #[arg(long, value_name = "FILE")]
    pub metric: Option<PathBuf>,
    /// `xmin,xmax,ymin,ymax` [default: centroid bounding box grown by 3 rho].
    #[arg(long, allow_hyphen_values = true)]
    pub bounds: Option<String>,
    /// Cells per axis [default: 50].
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}
merge_fields!(DensityGridArgs { metric, bounds, resolution, out });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosePullbackArgs {
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
    /// Scale in `beta (J^T J + I)` [default: 1].
    #[arg(long)]
    pub beta: Option<f64>,
    /// Metric field to tabulate alongside.
    #[arg(long, value_name = "FILE")]
    pub metric: Option<PathBuf>,
    /// Number of embeddings to report [default: 100].
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}
merge_fields!(DiagnosePullbackArgs { model, embeddings, beta, metric, limit, out });

/// Runs the CLI on `argv` (program name first) and returns the exit code:
/// 0 on success, 1 for invalid input, 2 for I/O failures.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .try_init();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let threads = match cli.threads {
        Some(t) => Some(t),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| CliError::usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?,
            ),
            Err(_) => file.threads,
        },
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| CliError::usage(format!("cannot start thread pool: {e}")))?;

    pool.install(|| match cli.command {
        Command::GenData(mut a) => {
            a.merge(file.gen_data);
            gen_data(a, seed)
        }
        Command::Train(mut a) => {
            a.merge(file.train);
            train_cmd(a, seed)
        }
        Command::Embed(mut a) => {
            a.merge(file.embed);
            embed(a)
        }
        Command::BuildMetric(mut a) => {
            a.merge(file.build_metric);
            build_metric(a, seed)
        }
        Command::Sample(mut a) => {
            a.merge(file.sample);
            sample(a, seed)
        }
        Command::Interpolate(mut a) => {
            a.merge(file.interpolate);
            path_cmd(a, false)
        }
        Command::Geodesic(mut a) => {
            a.merge(file.geodesic);
            path_cmd(a, true)
        }
        Command::DensityGrid(mut a) => {
            a.merge(file.density_grid);
            density(a)
        }
        Command::DiagnosePullback(mut a) => {
            a.merge(file.diagnose_pullback);
            diagnose(a)
        }
    })
}

fn need<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::usage(format!("missing required option --{flag}")))
}

/// Parses `a,b,...` into reals.
fn parse_reals(text: &str, flag: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| CliError::usage(format!("--{flag}: `{s}` is not a finite number")))
        })
        .collect()
}

fn parse_point(text: &str, flag: &str, dim: usize) -> Result<Vec<f64>, CliError> {
    let p = parse_reals(text, flag)?;
    if p.len() != dim {
        return Err(CliError::usage(format!(
            "--{flag} has {} coordinates but the metric is {dim}-dimensional",
            p.len()
        )));
    }
    Ok(p)
}

fn read_model(path: &Path) -> Result<VaeModel, CliError> {
    Ok(io::read_checkpoint(path).map_err(|e| CliError::at(path, e))?.model)
}

fn read_field(path: &Path) -> Result<MetricField, CliError> {
    io::read_metric_field(path).map_err(|e| CliError::at(path, e))
}

/// Decodes every point and writes `<prefix>-<index>.pgm` into `dir`.
fn write_decoded(model: &VaeModel, points: &[Vec<f64>], dir: &Path, prefix: &str) -> Result<(), CliError> {
    let dim = points.first().map_or(model.latent_dim(), Vec::len);
    if dim != model.latent_dim() {
        return Err(CliError::usage(format!(
            "model latent dimension {} does not match the {dim}-dimensional points",
            model.latent_dim()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| CliError::at(dir, e))?;
    let width = points.len().saturating_sub(1).max(1).to_string().len().max(3);
    for (i, z) in points.iter().enumerate() {
        let img = Pgm::from_probabilities(&model.decode(z)?)?;
        let path = dir.join(format!("{prefix}-{i:0width$}.pgm"));
        io::write_pgm(&path, &img).map_err(|e| CliError::at(&path, e))?;
    }
    info!("wrote {} images to {}", points.len(), dir.display());
    Ok(())
}

fn gen_data(a: GenDataArgs, seed: u64) -> Result<(), CliError> {
    let n = a.n.unwrap_or(5000);
    let out = need(a.out, "out")?;
    if n == 0 {
        return Err(CliError::usage("--n must be at least 1"));
    }
    let data = generate_toy_dataset(n, seed);
    io::write_dataset(&out, &data).map_err(|e| CliError::at(&out, e))?;
    info!("wrote {n} images to {}", out.display());
    Ok(())
}

fn train_cmd(a: TrainArgs, seed: u64) -> Result<(), CliError> {
    let data_path = need(a.data, "data")?;
    let out = need(a.out, "out")?;
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        epochs: a.epochs.unwrap_or(defaults.epochs),
        batch_size: a.batch_size.unwrap_or(defaults.batch_size),
        learning_rate: a.lr.unwrap_or(defaults.learning_rate),
        beta: a.beta.unwrap_or(defaults.beta),
        seed,
        hidden: a.hidden.unwrap_or(defaults.hidden),
        latent_dim: a.latent_dim.unwrap_or(defaults.latent_dim),
        ..defaults
    };
    cfg.validate()?;
    let data = io::read_dataset(&data_path).map_err(|e| CliError::at(&data_path, e))?;
    info!(
        "training on {} images: {} epochs, batch {}, latent dim {}",
        data.len(),
        cfg.epochs,
        cfg.batch_size,
        cfg.latent_dim
    );
    let outcome = train(&data, &cfg)?;
    if let Some(last) = outcome.loss_history.last() {
        info!("final epoch loss {last:.4}");
    }
    let ckpt = Checkpoint {
        model: outcome.model,
        config: cfg,
        loss_history: outcome.loss_history,
    };
    io::write_checkpoint(&out, &ckpt).map_err(|e| CliError::at(&out, e))?;
    info!("wrote checkpoint to {}", out.display());
    Ok(())
}

fn embed(a: EmbedArgs) -> Result<(), CliError> {
    let model_path = need(a.model, "model")?;
    let data_path = need(a.data, "data")?;
    let out = need(a.out, "out")?;
    let model = read_model(&model_path)?;
    let data = io::read_dataset(&data_path).map_err(|e| CliError::at(&data_path, e))?;
    let set = embed_dataset(&model, &data)?;
    io::write_embeddings(&out, &set).map_err(|e| CliError::at(&out, e))?;
    info!("wrote {} embeddings to {}", set.len(), out.display());
    Ok(())
}

fn build_metric(a: BuildMetricArgs, seed: u64) -> Result<(), CliError> {
    let emb_path = need(a.embeddings, "embeddings")?;
    let out = need(a.out, "out")?;
    let set = io::read_embeddings(&emb_path).map_err(|e| CliError::at(&emb_path, e))?;
    let k = a.k.unwrap_or(100);
    let field = build_metric_field(&set, k, a.lambda.unwrap_or(DEFAULT_LAMBDA), a.tau.unwrap_or(0.0), seed)?;
    io::write_metric_field(&out, &field).map_err(|e| CliError::at(&out, e))?;
    info!(
        "wrote metric with {} centroids (rho {:.4}) to {}",
        field.centroids().len(),
        field.rho(),
        out.display()
    );
    Ok(())
}

fn sample(a: SampleArgs, seed: u64) -> Result<(), CliError> {
    let metric_path = need(a.metric, "metric")?;
    let out = need(a.out, "out")?;
    if a.decode_with.is_some() != a.images_out.is_some() {
        return Err(CliError::usage("--decode-with and --images-out go together"));
    }
    let field = read_field(&metric_path)?;
    let defaults = HmcConfig::default();
    let init = match a.init.as_deref().map(str::trim) {
        None | Some("random-centroid") => ChainInit::RandomCentroid,
        Some(text) => ChainInit::Point(parse_point(text, "init", field.dim())?),
    };
    let cfg = HmcConfig {
        n_samples: a.n.unwrap_or(defaults.n_samples),
        chain_length: a.chain_length.unwrap_or(defaults.chain_length),
        n_leapfrog: a.n_leapfrog.unwrap_or(defaults.n_leapfrog),
        step_size: a.step_size.unwrap_or(defaults.step_size),
        seed,
        init,
        record_trace: a.trace,
    };
    info!(
        "running {} chains of {} steps ({} leapfrog steps of {})",
        cfg.n_samples, cfg.chain_length, cfg.n_leapfrog, cfg.step_size
    );
    let batch = hmc_sample(&field, &cfg)?;
    let report = acceptance_diagnostics(&batch);
    info!(
        "acceptance rate {:.3}, mean |dH| {:.3e}",
        report.acceptance_rate, report.mean_abs_delta_h
    );
    io::write_samples(&out, &batch).map_err(|e| CliError::at(&out, e))?;
    info!("wrote {} samples to {}", batch.samples.len(), out.display());
    if let (Some(model_path), Some(dir)) = (a.decode_with, a.images_out) {
        write_decoded(&read_model(&model_path)?, &batch.samples, &dir, "sample")?;
    }
    Ok(())
}

fn path_cmd(a: PathArgs, geodesic: bool) -> Result<(), CliError> {
    let metric_path = need(a.metric, "metric")?;
    let from = need(a.from, "from")?;
    let to = need(a.to, "to")?;
    let out = need(a.out, "out")?;
    if geodesic && a.affine {
        return Err(CliError::usage("--affine only applies to interpolate"));
    }
    if a.decode_with.is_some() != a.images_out.is_some() {
        return Err(CliError::usage("--decode-with and --images-out go together"));
    }
    let field = read_field(&metric_path)?;
    let z1 = parse_point(&from, "from", field.dim())?;
    let z2 = parse_point(&to, "to", field.dim())?;
    let defaults = PathConfig::default();
    let cfg = PathConfig {
        n_points: a.points.unwrap_or(defaults.n_points),
        max_iters: a.max_iters.unwrap_or(defaults.max_iters),
        init_step: a.init_step.unwrap_or(defaults.init_step),
        alpha: a.alpha.unwrap_or(defaults.alpha),
        tolerance: a.tolerance.unwrap_or(defaults.tolerance),
    };
    cfg.validate()?;
    let record = if a.affine {
        PathRecord {
            kind: PathKind::Affine,
            n_points: cfg.n_points,
            points: affine_interpolation(&z1, &z2, cfg.n_points)?,
            energies: Vec::new(),
            iterations: 0,
            converged: true,
            start: z1,
            end: z2,
            config: Some(cfg),
        }
    } else {
        let (kind, opt) = if geodesic {
            (PathKind::Geodesic, geodesic_path(&field, &z1, &z2, &cfg)?)
        } else {
            (PathKind::Potential, minimize_potential_path(&field, &z1, &z2, &cfg)?)
        };
        info!(
            "{} iterations, energy {:.6e} -> {:.6e}{}",
            opt.iterations,
            opt.energies[0],
            opt.final_energy(),
            if opt.converged { "" } else { " (iteration limit reached)" }
        );
        PathRecord {
            kind,
            n_points: cfg.n_points,
            points: opt.path,
            energies: opt.energies,
            iterations: opt.iterations,
            converged: opt.converged,
            start: z1,
            end: z2,
            config: Some(cfg),
        }
    };
    io::write_path(&out, &record).map_err(|e| CliError::at(&out, e))?;
    info!("wrote path to {}", out.display());
    if let (Some(model_path), Some(dir)) = (a.decode_with, a.images_out) {
        write_decoded(&read_model(&model_path)?, record.points.points(), &dir, "point")?;
    }
    Ok(())
}

fn density(a: DensityGridArgs) -> Result<(), CliError> {
    let metric_path = need(a.metric, "metric")?;
    let out = need(a.out, "out")?;
    let field = read_field(&metric_path)?;
    let bounds = match a.bounds {
        Some(text) => {
            let b = parse_reals(&text, "bounds")?;
            if b.len() != 4 {
                return Err(CliError::usage("--bounds takes xmin,xmax,ymin,ymax"));
            }
            Box2::new((b[0], b[1]), (b[2], b[3]))?
        }
        None => Box2::around_field(&field)?,
    };
    let grid = density_grid(&field, bounds, a.resolution.unwrap_or(50))?;
    io::write_density_grid(&out, &grid).map_err(|e| CliError::at(&out, e))?;
    info!(
        "wrote {}x{} grid over [{}, {}] x [{}, {}] to {}",
        grid.resolution(),
        grid.resolution(),
        bounds.x.0,
        bounds.x.1,
        bounds.y.0,
        bounds.y.1,
        out.display()
    );
    Ok(())
}

fn diagnose(a: DiagnosePullbackArgs) -> Result<(), CliError> {
    let model_path = need(a.model, "model")?;
    let emb_path = need(a.embeddings, "embeddings")?;
    let out = need(a.out, "out")?;
    let model = read_model(&model_path)?;
    let set = io::read_embeddings(&emb_path).map_err(|e| CliError::at(&emb_path, e))?;
    let field = a.metric.as_deref().map(read_field).transpose()?;
    let beta = a.beta.unwrap_or(1.0);
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(CliError::usage("--beta must be positive"));
    }
    let report = pullback_report(&model, &set, beta, field.as_ref(), a.limit.unwrap_or(100))?;
    let text = io::to_json(&report)?;
    fs::write(&out, text).map_err(|e| CliError::at(&out, e))?;
    info!("wrote {} comparisons to {}", report.len(), out.display());
    Ok(())
}
