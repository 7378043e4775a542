//! Interpolation between latent points.
//!
//! Paths are discretized as `T` points with fixed endpoints. Two objectives
//! are optimized over the interior points by gradient descent:
//!
//! - the potential energy `∫ V(γ(t)) dt` with `V = 1 / sqrt(det G)`, plus an
//!   elastic term `α (T-1) Σ |γ_{t+1} - γ_t|^2` that keeps points evenly
//!   spread (the integral alone does not care how points are distributed
//!   along the curve once discretized);
//! - the discrete Riemannian energy `(T-1) Σ Δ_t^T G(m_t) Δ_t` with `m_t` the
//!   segment midpoint, whose minimizers are constant-speed geodesics.
//!
//! Both descents start from the straight line, take fixed steps, halve the
//! step whenever the energy would increase, and stop once the relative
//! decrease drops below the tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::MetricField;

/// Ordered latent points; the first and last are the pinned endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct LatentPath(Vec<Vec<f64>>);

impl LatentPath {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("path", format!("needs at least 2 points, got {}", points.len())));
        }
        let d = points[0].len();
        if d == 0 {
            return Err(Error::invalid("path", "points must have dimension >= 1"));
        }
        for p in &points {
            check_dim(d, p.len())?;
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("path point".into()));
            }
        }
        Ok(LatentPath(points))
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.0[0].len()
    }

    pub fn start(&self) -> &[f64] {
        &self.0[0]
    }

    pub fn end(&self) -> &[f64] {
        &self.0[self.0.len() - 1]
    }

    pub fn reversed(&self) -> LatentPath {
        LatentPath(self.0.iter().rev().cloned().collect())
    }
}

impl TryFrom<Vec<Vec<f64>>> for LatentPath {
    type Error = Error;

    fn try_from(points: Vec<Vec<f64>>) -> Result<Self> {
        LatentPath::new(points)
    }
}

impl From<LatentPath> for Vec<Vec<f64>> {
    fn from(p: LatentPath) -> Self {
        p.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub n_points: usize,
    pub max_iters: usize,
    pub init_step: f64,
    /// Weight of the elastic spacing term (potential paths only).
    pub alpha: f64,
    /// Stop once an accepted step lowers the energy by less than this
    /// fraction.
    pub tolerance: f64,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            n_points: 50,
            max_iters: 2000,
            init_step: 1e-2,
            alpha: 1.0,
            tolerance: 1e-8,
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_points < 3 {
            return Err(Error::invalid("n_points", format!("must be >= 3, got {}", self.n_points)));
        }
        if !(self.init_step > 0.0 && self.init_step.is_finite()) {
            return Err(Error::invalid("init_step", format!("must be finite and > 0, got {}", self.init_step)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha", format!("must be finite and >= 0, got {}", self.alpha)));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::invalid("tolerance", format!("must be >= 0, got {}", self.tolerance)));
        }
        Ok(())
    }
}

/// Result of a path optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizedPath {
    pub path: LatentPath,
    /// Objective after initialization and after every accepted step.
    pub energies: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl OptimizedPath {
    pub fn final_energy(&self) -> f64 {
        *self.energies.last().expect("at least the initial energy")
    }
}

/// `γ_t = z1 + t/(T-1) (z2 - z1)`.
pub fn affine_interpolation(z1: &[f64], z2: &[f64], n_points: usize) -> Result<LatentPath> {
    check_dim(z1.len(), z2.len())?;
    if n_points < 2 {
        return Err(Error::invalid("n_points", format!("must be >= 2, got {n_points}")));
    }
    let last = (n_points - 1) as f64;
    let mut points: Vec<Vec<f64>> = (0..n_points)
        .map(|t| {
            let s = t as f64 / last;
            z1.iter().zip(z2).map(|(a, b)| a + s * (b - a)).collect()
        })
        .collect();
    // pin the far endpoint bit-exactly
    points[n_points - 1] = z2.to_vec();
    LatentPath::new(points)
}

/// `V(z) = 1 / sqrt(det G(z))`.
pub fn potential(field: &MetricField, z: &[f64]) -> Result<f64> {
    Ok((-0.5 * field.log_det_metric(z)?).exp())
}

/// Trapezoidal approximation of `∫_0^1 V(γ(t)) dt`.
pub fn path_potential_energy(field: &MetricField, path: &LatentPath) -> Result<f64> {
    check_dim(field.dim(), path.dim())?;
    let values = path.points().iter().map(|p| potential(field, p)).collect::<Result<Vec<_>>>()?;
    let dt = 1.0 / (path.len() - 1) as f64;
    Ok(values.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dt).sum())
}

/// Mean of `V` over the path's points.
pub fn mean_potential(field: &MetricField, path: &LatentPath) -> Result<f64> {
    check_dim(field.dim(), path.dim())?;
    let total = path.points().iter().map(|p| potential(field, p)).sum::<Result<f64>>()?;
    Ok(total / path.len() as f64)
}

/// `Σ_t sqrt(Δ_t^T G(m_t) Δ_t)`.
pub fn riemannian_path_length(field: &MetricField, path: &LatentPath) -> Result<f64> {
    check_dim(field.dim(), path.dim())?;
    path.points()
        .windows(2)
        .map(|w| {
            let (delta, mid) = segment(&w[0], &w[1]);
            Ok(field.metric_at(&mid)?.quad_form(&delta)?.sqrt())
        })
        .sum()
}

/// Discrete Riemannian energy `(T-1) Σ_t Δ_t^T G(m_t) Δ_t`.
pub fn riemannian_path_energy(field: &MetricField, path: &LatentPath) -> Result<f64> {
    check_dim(field.dim(), path.dim())?;
    let scale = (path.len() - 1) as f64;
    let sum = path
        .points()
        .windows(2)
        .map(|w| {
            let (delta, mid) = segment(&w[0], &w[1]);
            field.metric_at(&mid)?.quad_form(&delta)
        })
        .sum::<Result<f64>>()?;
    Ok(scale * sum)
}

fn segment(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let delta = b.iter().zip(a).map(|(y, x)| y - x).collect();
    let mid = b.iter().zip(a).map(|(y, x)| 0.5 * (x + y)).collect();
    (delta, mid)
}

/// Potential energy plus the elastic term, with its gradient for every point
/// (entries for the endpoints are left at zero).
pub fn elastic_potential_energy_and_grad(
    field: &MetricField,
    points: &[Vec<f64>],
    alpha: f64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let t_len = points.len();
    let d = field.dim();
    let segments = (t_len - 1) as f64;
    let dt = 1.0 / segments;

    let mut energy = 0.0;
    let mut grad = vec![vec![0.0; d]; t_len];
    let mut prev_v = None;
    for (t, p) in points.iter().enumerate() {
        let (log_det, glog) = field.log_det_and_grad(p)?;
        let v = (-0.5 * log_det).exp();
        if let Some(pv) = prev_v {
            energy += 0.5 * (pv + v) * dt;
        }
        prev_v = Some(v);
        if t > 0 && t + 1 < t_len {
            // interior points carry weight dt in the trapezoid rule; ∇V = -V/2 ∇ log det G
            for (gi, dl) in grad[t].iter_mut().zip(&glog) {
                *gi += dt * (-0.5 * v * dl);
            }
        }
    }
    if alpha > 0.0 {
        let k = alpha * segments;
        for t in 0..t_len - 1 {
            let (a, b) = (&points[t], &points[t + 1]);
            for j in 0..d {
                let diff = b[j] - a[j];
                energy += k * diff * diff;
                if t > 0 {
                    grad[t][j] -= 2.0 * k * diff;
                }
                if t + 2 < t_len {
                    grad[t + 1][j] += 2.0 * k * diff;
                }
            }
        }
    }
    Ok((energy, grad))
}

/// Discrete Riemannian energy with its gradient (endpoint entries zero).
pub fn riemannian_energy_and_grad(field: &MetricField, points: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)> {
    let t_len = points.len();
    let d = field.dim();
    let scale = (t_len - 1) as f64;
    let mut energy = 0.0;
    let mut grad = vec![vec![0.0; d]; t_len];
    for t in 0..t_len - 1 {
        let (delta, mid) = segment(&points[t], &points[t + 1]);
        let (g, jac) = field.metric_and_jacobian(&mid)?;
        energy += scale * delta.iter().zip(&g).map(|(x, gj)| gj * x * x).sum::<f64>();
        for l in 0..d {
            // midpoint dependence, shared equally by both ends
            let through_mid: f64 = 0.5 * (0..d).map(|j| delta[j] * delta[j] * jac[j][l]).sum::<f64>();
            let through_delta = 2.0 * g[l] * delta[l];
            if t > 0 {
                grad[t][l] += scale * (through_mid - through_delta);
            }
            if t + 2 < t_len {
                grad[t + 1][l] += scale * (through_mid + through_delta);
            }
        }
    }
    Ok((energy, grad))
}

fn descend<F>(init: LatentPath, cfg: &PathConfig, objective: F) -> Result<OptimizedPath>
where
    F: Fn(&[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)>,
{
    let mut points: Vec<Vec<f64>> = init.into();
    let (mut energy, mut grad) = objective(&points)?;
    if !energy.is_finite() {
        return Err(Error::NonFinite("path energy at initialization".into()));
    }
    let mut energies = vec![energy];
    let mut step = cfg.init_step;
    let mut converged = false;
    let mut iterations = 0;
    let last = points.len() - 1;

    while iterations < cfg.max_iters {
        iterations += 1;
        let mut candidate = points.clone();
        for (p, g) in candidate[1..last].iter_mut().zip(&grad[1..last]) {
            for (x, gx) in p.iter_mut().zip(g) {
                *x -= step * gx;
            }
        }
        let trial = objective(&candidate).ok().filter(|(e, _)| e.is_finite() && *e <= energy);
        match trial {
            Some((new_energy, new_grad)) => {
                let decrease = (energy - new_energy) / energy.abs().max(f64::MIN_POSITIVE);
                points = candidate;
                energy = new_energy;
                grad = new_grad;
                energies.push(energy);
                if decrease < cfg.tolerance {
                    converged = true;
                    break;
                }
            }
            None => {
                step *= 0.5;
                if step < f64::EPSILON * cfg.init_step {
                    converged = true;
                    break;
                }
            }
        }
    }
    Ok(OptimizedPath {
        path: LatentPath::new(points)?,
        energies,
        iterations,
        converged,
    })
}

/// Minimizes the elastic potential energy between two fixed endpoints,
/// starting from the straight line.
pub fn minimize_potential_path(field: &MetricField, z1: &[f64], z2: &[f64], cfg: &PathConfig) -> Result<OptimizedPath> {
    cfg.validate()?;
    check_dim(field.dim(), z1.len())?;
    minimize_potential_from(field, affine_interpolation(z1, z2, cfg.n_points)?, cfg)
}

/// [`minimize_potential_path`] from a given initial path; its endpoints stay
/// fixed and `cfg.n_points` is ignored.
pub fn minimize_potential_from(field: &MetricField, init: LatentPath, cfg: &PathConfig) -> Result<OptimizedPath> {
    cfg.validate()?;
    check_dim(field.dim(), init.dim())?;
    descend(init, cfg, |pts| elastic_potential_energy_and_grad(field, pts, cfg.alpha))
}

/// Minimizes the discrete Riemannian energy between two fixed endpoints,
/// starting from the straight line.
pub fn geodesic_path(field: &MetricField, z1: &[f64], z2: &[f64], cfg: &PathConfig) -> Result<OptimizedPath> {
    cfg.validate()?;
    check_dim(field.dim(), z1.len())?;
    geodesic_from(field, affine_interpolation(z1, z2, cfg.n_points)?, cfg)
}

/// [`geodesic_path`] from a given initial path; its endpoints stay fixed and
/// `cfg.n_points` is ignored.
pub fn geodesic_from(field: &MetricField, init: LatentPath, cfg: &PathConfig) -> Result<OptimizedPath> {
    cfg.validate()?;
    check_dim(field.dim(), init.dim())?;
    descend(init, cfg, |pts| riemannian_energy_and_grad(field, pts))
}
