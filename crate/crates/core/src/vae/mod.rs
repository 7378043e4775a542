//! The toy experiment: a disks-and-rings image generator, a small MLP VAE
//! trained by maximizing the ELBO, and decoder-side diagnostics.

pub mod dataset;
pub mod model;
pub mod train;

use serde::{Deserialize, Serialize};

pub use dataset::{generate_toy_dataset, validity_check, DiskRingImage, Shape, Validity, Verdict};
pub use model::{
    backprop_grads, decoder_jacobian, elbo_terms, pullback_metric, reparam_sample, Activation, Dense, ElboTerms,
    VaeModel,
};
pub use train::{embed_dataset, train, TrainConfig, TrainOutcome};

use crate::centroids::EmbeddingSet;
use crate::error::Result;
use crate::geometry::MetricField;

/// Step used for decoder Jacobians unless stated otherwise.
pub const DEFAULT_JACOBIAN_STEP: f64 = 1e-5;

/// Pull-back metric next to the posterior precision at one embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PullbackComparison {
    pub id: String,
    pub mu: Vec<f64>,
    /// `J^T J` at `mu`.
    pub pullback: Vec<Vec<f64>>,
    /// `beta * (J^T J + I)`.
    pub scaled_pullback_plus_identity: Vec<Vec<f64>>,
    /// Diagonal of the posterior precision `exp(-log_var)`.
    pub inverse_covariance: Vec<f64>,
    /// Diagonal of the metric field at `mu`, when a field is supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Vec<f64>>,
}

/// Tabulates the pull-back metric of the decoder against the posterior
/// precision (and optionally a metric field) for the first `limit`
/// embeddings. The two only agree near an ELBO optimum, so this is reported,
/// not asserted.
pub fn pullback_report(
    model: &VaeModel,
    embeddings: &EmbeddingSet,
    beta: f64,
    field: Option<&MetricField>,
    limit: usize,
) -> Result<Vec<PullbackComparison>> {
    embeddings
        .records
        .iter()
        .take(limit)
        .map(|r| {
            let g = pullback_metric(model, &r.mu, DEFAULT_JACOBIAN_STEP)?;
            let d = g.nrows();
            let pullback: Vec<Vec<f64>> = g.outer_iter().map(|row| row.to_vec()).collect();
            let scaled = (0..d)
                .map(|i| (0..d).map(|j| beta * (g[[i, j]] + if i == j { 1.0 } else { 0.0 })).collect())
                .collect();
            let metric = match field {
                Some(f) => Some(f.metric_at(&r.mu)?.into_entries()),
                None => None,
            };
            Ok(PullbackComparison {
                id: r.id.clone(),
                mu: r.mu.clone(),
                pullback,
                scaled_pullback_plus_identity: scaled,
                inverse_covariance: r.log_var.iter().map(|lv| (-lv).exp()).collect(),
                metric,
            })
        })
        .collect()
}
