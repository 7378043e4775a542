//! The latent-space Riemannian metric built from posterior statistics.
//!
//! Every centroid contributes its inverse posterior covariance, weighted by a
//! Gaussian-shaped interpolant of bandwidth `rho`, and a decaying multiple of
//! the identity keeps the tensor positive definite everywhere:
//!
//! ```text
//! G(z) = sum_i inv_cov_i * w_i(z) + lambda * exp(-tau * |z|^2) * I
//! w_i(z) = exp(-(z - mu_i)^T inv_cov_i (z - mu_i) / rho^2)
//! ```
//!
//! Covariances are diagonal, so `G(z)` is diagonal and every quantity here is
//! evaluated in `O(k * d)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Diagonal symmetric positive-definite matrix, stored as its diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DiagSpd(Vec<f64>);

impl DiagSpd {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty("diagonal matrix"));
        }
        for (index, &value) in entries.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("diagonal entry {index}")));
            }
            if value <= 0.0 {
                return Err(Error::NotPositiveDefinite { index, value });
            }
        }
        Ok(DiagSpd(entries))
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    /// `scale * I`. Panics if `scale` is not strictly positive or `dim == 0`.
    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        assert!(dim > 0 && scale > 0.0 && scale.is_finite());
        DiagSpd(vec![scale; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    pub fn into_entries(self) -> Vec<f64> {
        self.0
    }

    /// Sum of the log entries; never forms the product.
    pub fn log_det(&self) -> f64 {
        self.0.iter().map(|s| s.ln()).sum()
    }

    pub fn det(&self) -> f64 {
        self.log_det().exp()
    }

    /// `v^T S v`.
    pub fn quad_form(&self, v: &[f64]) -> Result<f64> {
        check_dim(self.dim(), v.len())?;
        Ok(self.0.iter().zip(v).map(|(s, x)| s * x * x).sum())
    }

    /// Infinity norm, i.e. the largest entry.
    pub fn max_entry(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for DiagSpd {
    type Error = Error;

    fn try_from(entries: Vec<f64>) -> Result<Self> {
        DiagSpd::new(entries)
    }
}

impl From<DiagSpd> for Vec<f64> {
    fn from(m: DiagSpd) -> Self {
        m.0
    }
}

/// A posterior mean together with its inverse covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroid {
    mu: Vec<f64>,
    inv_cov: DiagSpd,
}

impl Centroid {
    pub fn new(mu: Vec<f64>, inv_cov: DiagSpd) -> Result<Self> {
        check_dim(inv_cov.dim(), mu.len())?;
        if mu.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("centroid position".into()));
        }
        Ok(Centroid { mu, inv_cov })
    }

    /// Builds a centroid from an encoder's `(mu, log_var)` output, recovering
    /// the inverse covariance as `exp(-log_var)`.
    pub fn from_log_var(mu: Vec<f64>, log_var: &[f64]) -> Result<Self> {
        let inv_cov = DiagSpd::new(log_var.iter().map(|lv| (-lv).exp()).collect())?;
        Self::new(mu, inv_cov)
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn inv_cov(&self) -> &DiagSpd {
        &self.inv_cov
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    #[inline]
    fn scaled_sq_dist(&self, z: &[f64]) -> f64 {
        self.mu
            .iter()
            .zip(self.inv_cov.entries())
            .zip(z)
            .map(|((m, s), x)| {
                let dx = x - m;
                s * dx * dx
            })
            .sum()
    }
}

/// Interpolation weight of a centroid at `z`, in `(0, 1]` (it may flush to
/// zero far from the centroid).
pub fn weight_omega(centroid: &Centroid, z: &[f64], rho: f64) -> Result<f64> {
    check_dim(centroid.dim(), z.len())?;
    if !(rho > 0.0) {
        return Err(Error::invalid("rho", format!("must be > 0, got {rho}")));
    }
    Ok((-centroid.scaled_sq_dist(z) / (rho * rho)).exp())
}

/// The metric field. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    dim: usize,
    centroids: Vec<Centroid>,
    lambda: f64,
    tau: f64,
    rho: f64,
}

impl MetricField {
    pub fn new(dim: usize, centroids: Vec<Centroid>, lambda: f64, tau: f64, rho: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("lambda", format!("must be finite and > 0, got {lambda}")));
        }
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::invalid("tau", format!("must be finite and >= 0, got {tau}")));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::invalid("rho", format!("must be finite and > 0, got {rho}")));
        }
        for c in &centroids {
            check_dim(dim, c.dim())?;
        }
        Ok(MetricField {
            dim,
            centroids,
            lambda,
            tau,
            rho,
        })
    }

    /// A field without centroids: `G(z) = lambda * exp(-tau |z|^2) * I`.
    pub fn flat(dim: usize, lambda: f64, tau: f64) -> Result<Self> {
        Self::new(dim, Vec::new(), lambda, tau, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroids(&self) -> &[Centroid] {
        &self.centroids
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    #[inline]
    fn identity_term(&self, z: &[f64]) -> f64 {
        if self.tau == 0.0 {
            self.lambda
        } else {
            let sq: f64 = z.iter().map(|x| x * x).sum();
            self.lambda * (-self.tau * sq).exp()
        }
    }

    /// Diagonal of `G(z)` written into `out`, plus the interpolation weights
    /// written into `weights` (one per centroid).
    fn eval_into(&self, z: &[f64], out: &mut [f64], weights: &mut Vec<f64>) {
        let reg = self.identity_term(z);
        out.iter_mut().for_each(|g| *g = reg);
        weights.clear();
        let inv_rho2 = 1.0 / (self.rho * self.rho);
        for c in &self.centroids {
            let w = (-c.scaled_sq_dist(z) * inv_rho2).exp();
            weights.push(w);
            if w != 0.0 {
                for (g, s) in out.iter_mut().zip(c.inv_cov.entries()) {
                    *g += s * w;
                }
            }
        }
    }

    /// `G(z)`.
    pub fn metric_at(&self, z: &[f64]) -> Result<DiagSpd> {
        check_dim(self.dim, z.len())?;
        let mut g = vec![0.0; self.dim];
        let mut w = Vec::with_capacity(self.centroids.len());
        self.eval_into(z, &mut g, &mut w);
        // lambda > 0 keeps every entry positive unless the identity term
        // underflows far out with tau > 0.
        DiagSpd::new(g)
    }

    /// `log det G(z)`, accumulated as a sum of logs.
    pub fn log_det_metric(&self, z: &[f64]) -> Result<f64> {
        Ok(self.metric_at(z)?.log_det())
    }

    /// `sqrt(det G(z))`, the Riemannian volume element.
    pub fn volume_element(&self, z: &[f64]) -> Result<f64> {
        Ok((0.5 * self.log_det_metric(z)?).exp())
    }

    /// Gradient of `log det G(z)` with respect to `z`.
    pub fn grad_log_det(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.log_det_and_grad(z)?.1)
    }

    /// `log det G(z)` and its gradient in one pass over the centroids.
    ///
    /// With `G` diagonal, `d/dz_l log det G = sum_j (dG_jj/dz_l) / G_jj`, and
    /// each centroid contributes
    /// `w_i * (-2/rho^2) * s_il (z_l - mu_il) * sum_j s_ij / G_jj`.
    pub fn log_det_and_grad(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_dim(self.dim, z.len())?;
        let mut g = vec![0.0; self.dim];
        let mut weights = Vec::with_capacity(self.centroids.len());
        self.eval_into(z, &mut g, &mut weights);
        let log_det = g.iter().map(|x| x.ln()).sum();

        let mut grad = vec![0.0; self.dim];
        let coef = -2.0 / (self.rho * self.rho);
        for (c, &w) in self.centroids.iter().zip(&weights) {
            if w == 0.0 {
                continue;
            }
            let trace: f64 = c.inv_cov.entries().iter().zip(&g).map(|(s, gj)| s / gj).sum();
            let scale = w * coef * trace;
            for ((gl, (s, m)), x) in grad.iter_mut().zip(c.inv_cov.entries().iter().zip(&c.mu)).zip(z) {
                *gl += scale * s * (x - m);
            }
        }
        if self.tau != 0.0 {
            let reg = self.identity_term(z);
            let inv_trace: f64 = g.iter().map(|gj| 1.0 / gj).sum();
            let scale = -2.0 * self.tau * reg * inv_trace;
            for (gl, x) in grad.iter_mut().zip(z) {
                *gl += scale * x;
            }
        }
        Ok((log_det, grad))
    }

    /// Diagonal of `G(z)` and its Jacobian: `jac[j][l] = dG_jj / dz_l`.
    pub fn metric_and_jacobian(&self, z: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        check_dim(self.dim, z.len())?;
        let d = self.dim;
        let mut g = vec![0.0; d];
        let mut weights = Vec::with_capacity(self.centroids.len());
        self.eval_into(z, &mut g, &mut weights);

        let mut jac = vec![vec![0.0; d]; d];
        let coef = -2.0 / (self.rho * self.rho);
        for (c, &w) in self.centroids.iter().zip(&weights) {
            if w == 0.0 {
                continue;
            }
            let s = c.inv_cov.entries();
            for l in 0..d {
                let dw = w * coef * s[l] * (z[l] - c.mu[l]);
                for j in 0..d {
                    jac[j][l] += s[j] * dw;
                }
            }
        }
        if self.tau != 0.0 {
            let reg = self.identity_term(z);
            for row in jac.iter_mut() {
                for (entry, x) in row.iter_mut().zip(z) {
                    *entry += -2.0 * self.tau * reg * x;
                }
            }
        }
        Ok((g, jac))
    }
}

/// `sqrt((z2 - z1)^T S (z2 - z1))`, the Riemannian distance under a constant
/// metric `S`.
pub fn mahalanobis_distance(z1: &[f64], z2: &[f64], metric: &DiagSpd) -> Result<f64> {
    check_dim(z1.len(), z2.len())?;
    let diff: Vec<f64> = z2.iter().zip(z1).map(|(b, a)| b - a).collect();
    Ok(metric.quad_form(&diff)?.sqrt())
}

/// Log-density of the Riemannian Gaussian `exp(-dist_S(z, mu)^2 / (2 sigma))`
/// under a locally constant metric `S`.
///
/// When `normalized` is set the constant-metric normalizer is included, which
/// makes the result the multivariate normal log-density with covariance
/// `sigma * S^-1`.
pub fn riemannian_gaussian_logpdf(
    mu: &[f64],
    metric: &DiagSpd,
    sigma: f64,
    z: &[f64],
    normalized: bool,
) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("sigma", format!("must be finite and > 0, got {sigma}")));
    }
    check_dim(metric.dim(), mu.len())?;
    let dist = mahalanobis_distance(mu, z, metric)?;
    let mut logp = -dist * dist / (2.0 * sigma);
    if normalized {
        let d = metric.dim() as f64;
        logp += -0.5 * d * (2.0 * std::f64::consts::PI * sigma).ln() + 0.5 * metric.log_det();
    }
    Ok(logp)
}

/// Axis-aligned 2-D box `[x_lo, x_hi] x [y_lo, y_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box2 {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Box2 {
    pub fn new(x: (f64, f64), y: (f64, f64)) -> Result<Self> {
        for (lo, hi) in [x, y] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid("bounds", format!("degenerate interval [{lo}, {hi}]")));
            }
        }
        Ok(Box2 { x, y })
    }

    /// Bounding box of the centroids grown by `3 * rho` on every side.
    pub fn around_field(field: &MetricField) -> Result<Self> {
        check_dim(2, field.dim())?;
        let margin = 3.0 * field.rho();
        let mut lo = [0.0f64; 2];
        let mut hi = [0.0f64; 2];
        if !field.centroids().is_empty() {
            lo = [f64::INFINITY; 2];
            hi = [f64::NEG_INFINITY; 2];
            for c in field.centroids() {
                for a in 0..2 {
                    lo[a] = lo[a].min(c.mu()[a]);
                    hi[a] = hi[a].max(c.mu()[a]);
                }
            }
        }
        Box2::new((lo[0] - margin, hi[0] + margin), (lo[1] - margin, hi[1] + margin))
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p[0] >= self.x.0 && p[0] <= self.x.1 && p[1] >= self.y.0 && p[1] <= self.y.1
    }
}

/// `sqrt(det G)` tabulated at the cell centers of a regular grid, normalized by
/// midpoint quadrature over the box.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    bounds: Box2,
    resolution: usize,
    /// Row-major over (x index, y index).
    values: Vec<f64>,
    normalizer: f64,
}

impl GridDensity {
    pub(crate) fn from_parts(bounds: Box2, resolution: usize, values: Vec<f64>) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::invalid("resolution", format!("must be >= 2, got {resolution}")));
        }
        check_dim(resolution * resolution, values.len())?;
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid("values", format!("volume element {v} is not a finite non-negative number")));
        }
        let cell_area = Self::cell_size(&bounds, resolution).iter().product::<f64>();
        let normalizer = values.iter().sum::<f64>() * cell_area;
        if !(normalizer > 0.0 && normalizer.is_finite()) {
            return Err(Error::invalid("values", "grid integrates to zero"));
        }
        Ok(GridDensity {
            bounds,
            resolution,
            values,
            normalizer,
        })
    }

    fn cell_size(bounds: &Box2, resolution: usize) -> [f64; 2] {
        let n = resolution as f64;
        [(bounds.x.1 - bounds.x.0) / n, (bounds.y.1 - bounds.y.0) / n]
    }

    pub fn bounds(&self) -> &Box2 {
        &self.bounds
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.resolution + j]
    }

    /// Probability mass of cell `(i, j)`.
    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.value(i, j) * self.cell_area() / self.normalizer
    }

    /// All cell masses, row-major.
    pub fn masses(&self) -> Vec<f64> {
        let area = self.cell_area();
        self.values.iter().map(|v| v * area / self.normalizer).collect()
    }

    pub fn cell_area(&self) -> f64 {
        Self::cell_size(&self.bounds, self.resolution).iter().product()
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        let [hx, hy] = Self::cell_size(&self.bounds, self.resolution);
        [
            self.bounds.x.0 + (i as f64 + 0.5) * hx,
            self.bounds.y.0 + (j as f64 + 0.5) * hy,
        ]
    }

    /// Cell containing `p`, or `None` outside the box. Points on the upper
    /// boundary belong to the last cell.
    pub fn cell_of(&self, p: &[f64]) -> Option<(usize, usize)> {
        if p.len() != 2 || !self.bounds.contains(p) {
            return None;
        }
        let [hx, hy] = Self::cell_size(&self.bounds, self.resolution);
        let last = self.resolution - 1;
        let i = (((p[0] - self.bounds.x.0) / hx) as usize).min(last);
        let j = (((p[1] - self.bounds.y.0) / hy) as usize).min(last);
        Some((i, j))
    }
}

/// Tabulates the Riemannian uniform density of a 2-D field over `bounds`.
pub fn density_grid(field: &MetricField, bounds: Box2, resolution: usize) -> Result<GridDensity> {
    if field.dim() != 2 {
        return Err(Error::invalid(
            "field",
            format!("grid quadrature needs a 2-D latent space, got dim {}", field.dim()),
        ));
    }
    let bounds = Box2::new(bounds.x, bounds.y)?;
    if resolution < 2 {
        return Err(Error::invalid("resolution", format!("must be >= 2, got {resolution}")));
    }
    let [hx, hy] = GridDensity::cell_size(&bounds, resolution);
    let mut values = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        let x = bounds.x.0 + (i as f64 + 0.5) * hx;
        for j in 0..resolution {
            let y = bounds.y.0 + (j as f64 + 0.5) * hy;
            values.push(field.volume_element(&[x, y])?);
        }
    }
    GridDensity::from_parts(bounds, resolution, values)
}
