//! Binary 32x32 images of disks and rings, and a shape checker for decoded
//! images.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::rng::{stream_rng, STREAM_DATASET};

pub const SIDE: usize = 32;
pub const PIXELS: usize = SIDE * SIDE;
const CENTER: i32 = 16;
const MAX_JITTER: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Disk,
    Ring,
}

/// A generated image with the parameters that produced it. Pixels are
/// row-major, 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DiskRingImage {
    pub pixels: Vec<u8>,
    pub label: Shape,
    /// (row, column) of the shape center.
    pub center: (i32, i32),
    pub outer_radius: f64,
    /// Equal to `outer_radius` for disks.
    pub thickness: f64,
}

impl DiskRingImage {
    pub fn render(label: Shape, center: (i32, i32), outer_radius: f64, thickness: f64) -> Self {
        let inner = match label {
            Shape::Disk => 0.0,
            Shape::Ring => outer_radius - thickness,
        };
        let mut pixels = vec![0u8; PIXELS];
        for row in 0..SIDE {
            for col in 0..SIDE {
                let dr = (row as i32 - center.0) as f64;
                let dc = (col as i32 - center.1) as f64;
                let dist = (dr * dr + dc * dc).sqrt();
                if dist <= outer_radius && dist >= inner {
                    pixels[row * SIDE + col] = 1;
                }
            }
        }
        DiskRingImage {
            pixels,
            label,
            center,
            outer_radius,
            thickness,
        }
    }

    pub fn pixel(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * SIDE + col]
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64).collect()
    }
}

/// `n` images, alternating disk and ring (even indices are disks).
///
/// Centers are jittered by up to two pixels around the image center, outer
/// radii are uniform in `[5, 13]` and ring thicknesses uniform in
/// `[2, r - 2]`.
pub fn generate_toy_dataset(n: usize, seed: u64) -> Vec<DiskRingImage> {
    let mut rng = stream_rng(seed, STREAM_DATASET);
    (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { Shape::Disk } else { Shape::Ring };
            let center = (
                CENTER + rng.random_range(-MAX_JITTER..=MAX_JITTER),
                CENTER + rng.random_range(-MAX_JITTER..=MAX_JITTER),
            );
            let r = rng.random_range(5.0..=13.0);
            let t = rng.random_range(2.0..=r - 2.0);
            match label {
                Shape::Disk => DiskRingImage::render(label, center, r, r),
                Shape::Ring => DiskRingImage::render(label, center, r, t),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    ValidDisk,
    ValidRing,
    Invalid,
}

impl Verdict {
    pub fn shape(self) -> Option<Shape> {
        match self {
            Verdict::ValidDisk => Some(Shape::Disk),
            Verdict::ValidRing => Some(Shape::Ring),
            Verdict::Invalid => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeFit {
    pub center: (i32, i32),
    pub outer_radius: f64,
    /// Zero for a disk.
    pub inner_radius: f64,
    /// Fraction of foreground pixels inside the fitted shape.
    pub foreground_covered: f64,
    /// Fraction of the fitted shape's pixels that are foreground.
    pub shape_filled: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Validity {
    pub verdict: Verdict,
    pub fit: Option<ShapeFit>,
}

const FIT_CENTER_RANGE: i32 = 3;
const FIT_MIN_RADIUS: f64 = 3.0;
const FIT_MAX_RADIUS: f64 = 15.0;
const FIT_RADIUS_STEP: f64 = 0.25;
const MIN_FOREGROUND_COVERED: f64 = 0.9;
const MIN_SHAPE_FILLED: f64 = 0.8;

/// Thresholds `image` at 0.5 and fits the best disk or ring by grid search
/// over centers (±3 px), outer radii in `[3, 15]` and inner radii, scoring
/// candidates by intersection over union.
///
/// The image is valid when at least 90% of its foreground lies inside the
/// fit and at least 80% of the fit is foreground.
pub fn validity_check(image: &[f64]) -> Result<Validity> {
    check_dim(PIXELS, image.len())?;
    let foreground: Vec<bool> = image.iter().map(|&v| v > 0.5).collect();
    let total_fg = foreground.iter().filter(|&&f| f).count();
    if total_fg == 0 {
        return Ok(Validity {
            verdict: Verdict::Invalid,
            fit: None,
        });
    }

    // squared distances are integers, so a cumulative count over d^2 gives
    // any annulus count in O(1)
    let max_sq = 2 * (SIDE as i32 + FIT_CENTER_RANGE).pow(2) as usize;
    let mut fg_cum = vec![0u32; max_sq + 1];
    let mut all_cum = vec![0u32; max_sq + 1];
    let radii: Vec<f64> = {
        let steps = ((FIT_MAX_RADIUS - FIT_MIN_RADIUS) / FIT_RADIUS_STEP).round() as usize;
        (0..=steps).map(|i| FIT_MIN_RADIUS + i as f64 * FIT_RADIUS_STEP).collect()
    };

    let mut best: Option<(f64, ShapeFit)> = None;
    for cr in CENTER - FIT_CENTER_RANGE..=CENTER + FIT_CENTER_RANGE {
        for cc in CENTER - FIT_CENTER_RANGE..=CENTER + FIT_CENTER_RANGE {
            fg_cum.iter_mut().for_each(|c| *c = 0);
            all_cum.iter_mut().for_each(|c| *c = 0);
            for row in 0..SIDE {
                for col in 0..SIDE {
                    let sq = ((row as i32 - cr).pow(2) + (col as i32 - cc).pow(2)) as usize;
                    all_cum[sq] += 1;
                    if foreground[row * SIDE + col] {
                        fg_cum[sq] += 1;
                    }
                }
            }
            for s in 1..=max_sq {
                fg_cum[s] += fg_cum[s - 1];
                all_cum[s] += all_cum[s - 1];
            }
            let count = |cum: &[u32], lo: f64, hi: f64| -> u32 {
                let hi_sq = ((hi * hi).floor() as usize).min(max_sq);
                let lo_sq = (lo * lo).ceil() as usize;
                if lo_sq == 0 {
                    cum[hi_sq]
                } else if lo_sq > hi_sq {
                    0
                } else {
                    cum[hi_sq] - cum[lo_sq - 1]
                }
            };
            for &outer in &radii {
                let inners = std::iter::once(0.0).chain(
                    (0..)
                        .map(|i| 1.0 + i as f64 * FIT_RADIUS_STEP)
                        .take_while(|&r| r <= outer - 1.0),
                );
                for inner in inners {
                    let hit = count(&fg_cum, inner, outer) as f64;
                    let area = count(&all_cum, inner, outer) as f64;
                    if area == 0.0 {
                        continue;
                    }
                    let iou = hit / (total_fg as f64 + area - hit);
                    if best.as_ref().map_or(true, |(b, _)| iou > *b) {
                        best = Some((
                            iou,
                            ShapeFit {
                                center: (cr, cc),
                                outer_radius: outer,
                                inner_radius: inner,
                                foreground_covered: hit / total_fg as f64,
                                shape_filled: hit / area,
                            },
                        ));
                    }
                }
            }
        }
    }

    let fit = best.map(|(_, f)| f);
    let verdict = match fit {
        Some(f) if f.foreground_covered >= MIN_FOREGROUND_COVERED && f.shape_filled >= MIN_SHAPE_FILLED => {
            if f.inner_radius == 0.0 {
                Verdict::ValidDisk
            } else {
                Verdict::ValidRing
            }
        }
        _ => Verdict::Invalid,
    };
    Ok(Validity { verdict, fit })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disks_are_filled_and_rings_are_hollow_at_the_center() {
        let data = generate_toy_dataset(400, 3);
        for img in &data {
            assert!(img.pixels.iter().all(|&p| p <= 1));
            let (r, c) = (img.center.0 as usize, img.center.1 as usize);
            match img.label {
                Shape::Disk => assert_eq!(img.pixel(r, c), 1),
                Shape::Ring => {
                    assert!(img.thickness < img.outer_radius);
                    assert!(img.outer_radius - img.thickness >= 2.0);
                    assert_eq!(img.pixel(r, c), 0);
                }
            }
            assert!((img.center.0 - CENTER).abs() <= 2 && (img.center.1 - CENTER).abs() <= 2);
            assert!((5.0..=13.0).contains(&img.outer_radius));
        }
        let disks = data.iter().filter(|i| i.label == Shape::Disk).count();
        assert_eq!(disks, 200);
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate_toy_dataset(20, 8), generate_toy_dataset(20, 8));
        assert_ne!(generate_toy_dataset(20, 8), generate_toy_dataset(20, 9));
    }

    #[test]
    fn generated_images_pass_the_checker_with_their_label() {
        for (i, img) in generate_toy_dataset(1000, 17).iter().enumerate() {
            let v = validity_check(&img.as_f64()).unwrap();
            assert_eq!(v.verdict.shape(), Some(img.label), "image {i}: {img:?} {v:?}");
        }
    }

    #[test]
    fn blank_and_saturated_images_are_invalid() {
        assert_eq!(validity_check(&[0.0; PIXELS]).unwrap().verdict, Verdict::Invalid);
        assert_eq!(validity_check(&[1.0; PIXELS]).unwrap().verdict, Verdict::Invalid);
        assert!(validity_check(&[0.0; 10]).is_err());
    }

    #[test]
    fn two_separate_blobs_are_invalid() {
        let a = DiskRingImage::render(Shape::Disk, (8, 8), 4.0, 4.0);
        let b = DiskRingImage::render(Shape::Disk, (24, 24), 4.0, 4.0);
        let merged: Vec<f64> = a.pixels.iter().zip(&b.pixels).map(|(x, y)| (x | y) as f64).collect();
        assert_eq!(validity_check(&merged).unwrap().verdict, Verdict::Invalid);
    }
}
