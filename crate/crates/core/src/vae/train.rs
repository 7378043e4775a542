use ndarray::{Array2, Axis, Zip};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::{DiskRingImage, PIXELS};
use super::model::{backprop_grads, Dense, VaeModel};
use crate::centroids::{EmbeddingRecord, EmbeddingSet};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, STREAM_INIT, STREAM_TRAIN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta: f64,
    pub seed: u64,
    pub hidden: usize,
    pub latent_dim: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 100,
            learning_rate: 1e-3,
            beta: 1.0,
            seed: 0,
            hidden: 400,
            latent_dim: 2,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs as f64),
            ("batch_size", self.batch_size as f64),
            ("learning_rate", self.learning_rate),
            ("hidden", self.hidden as f64),
            ("latent_dim", self.latent_dim as f64),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid("beta", format!("must be >= 0, got {}", self.beta)));
        }
        for (name, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::invalid(name, format!("must be in [0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

/// Adam moment estimates, one pair per layer.
struct Adam {
    first: Vec<Dense>,
    second: Vec<Dense>,
    steps: i32,
}

impl Adam {
    fn new(model: &VaeModel) -> Self {
        let zeros = || {
            model
                .layers()
                .iter()
                .map(|l| Dense::zeros(l.inputs(), l.outputs()))
                .collect::<Vec<_>>()
        };
        Adam {
            first: zeros(),
            second: zeros(),
            steps: 0,
        }
    }

    fn step(&mut self, model: &mut VaeModel, grads: &VaeModel, cfg: &TrainConfig) {
        self.steps += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let lr_t = cfg.learning_rate * (1.0 - b2.powi(self.steps)).sqrt() / (1.0 - b1.powi(self.steps));
        let eps_hat = cfg.adam_eps * (1.0 - b2.powi(self.steps)).sqrt();
        for (((param, grad), m), v) in model
            .layers_mut()
            .into_iter()
            .zip(grads.layers())
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            let update = |p: &mut f64, &g: &f64, m: &mut f64, v: &mut f64| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr_t * *m / (v.sqrt() + eps_hat);
            };
            Zip::from(&mut param.weight)
                .and(&grad.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .for_each(update);
            Zip::from(&mut param.bias)
                .and(&grad.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(update);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: VaeModel,
    /// Mean per-example loss of each epoch.
    pub loss_history: Vec<f64>,
}

/// Stacks images into an `n x 1024` matrix of zeros and ones.
pub fn images_to_matrix(images: &[DiskRingImage]) -> Array2<f64> {
    let mut x = Array2::zeros((images.len(), PIXELS));
    for (mut row, img) in x.outer_iter_mut().zip(images) {
        for (dst, &p) in row.iter_mut().zip(&img.pixels) {
            *dst = p as f64;
        }
    }
    x
}

/// Trains a VAE with Adam on shuffled mini-batches, maximizing the ELBO with
/// one reparametrized sample per example.
pub fn train(dataset: &[DiskRingImage], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_matrix(&images_to_matrix(dataset), cfg)
}

/// [`train`] on a pre-built data matrix (rows are examples with values in
/// `[0, 1]`).
pub fn train_matrix(data: &Array2<f64>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = data.nrows();
    if n == 0 {
        return Err(Error::Empty("training set"));
    }
    let mut model = VaeModel::new_random(data.ncols(), cfg.hidden, cfg.latent_dim, &mut stream_rng(cfg.seed, STREAM_INIT));
    let mut rng = stream_rng(cfg.seed, STREAM_TRAIN);
    let mut adam = Adam::new(&model);
    let mut order: Vec<usize> = (0..n).collect();
    let mut loss_history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.select(Axis(0), chunk);
            let (terms, grads) = backprop_grads(&model, &batch.view(), cfg.beta, &mut rng)?;
            if !terms.loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {} (rec {}, kl {})",
                    epoch + 1,
                    terms.rec,
                    terms.kl
                )));
            }
            total += terms.loss * chunk.len() as f64;
            adam.step(&mut model, &grads, cfg);
        }
        let mean = total / n as f64;
        log::debug!("epoch {:>4}: loss {mean:.4}", epoch + 1);
        loss_history.push(mean);
    }
    model.validate()?;
    Ok(TrainOutcome { model, loss_history })
}

/// Stable identifier of the `index`-th image of a dataset.
pub fn image_id(index: usize) -> String {
    format!("img-{index:06}")
}

/// Encodes every image; record `i` has id [`image_id`]`(i)`.
pub fn embed_dataset(model: &VaeModel, dataset: &[DiskRingImage]) -> Result<EmbeddingSet> {
    embed_matrix(model, &images_to_matrix(dataset))
}

pub fn embed_matrix(model: &VaeModel, data: &Array2<f64>) -> Result<EmbeddingSet> {
    let (mu, log_var) = model.encode_batch(&data.view())?;
    let records = mu
        .outer_iter()
        .zip(log_var.outer_iter())
        .enumerate()
        .map(|(i, (m, lv))| EmbeddingRecord {
            id: image_id(i),
            mu: m.to_vec(),
            log_var: lv.to_vec(),
        })
        .collect();
    EmbeddingSet::new(model.latent_dim(), records)
}
