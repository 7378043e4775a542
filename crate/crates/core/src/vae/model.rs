//! Two-layer MLP encoder and decoder with hand-derived reverse-mode
//! gradients of the negative ELBO.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]` before the
/// logs of the reconstruction term.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
    Logistic,
}

impl Activation {
    fn apply(self, a: &mut Array2<f64>) {
        match self {
            Activation::Tanh => a.mapv_inplace(f64::tanh),
            Activation::Identity => {}
            Activation::Logistic => a.mapv_inplace(logistic),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
            Activation::Logistic => y * (1.0 - y),
        }
    }
}

fn logistic(a: f64) -> f64 {
    // strictly inside (0, 1) even where exp saturates
    (1.0 / (1.0 + (-a).exp())).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Fully connected layer, `y = W x + b` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((outputs, inputs), || rng.random_range(-limit..limit));
        Dense {
            weight,
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    /// Rows of `x` are examples.
    fn forward(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight.t());
        y += &self.bias;
        y
    }

    fn check(&self, name: &'static str) -> Result<()> {
        check_dim(self.outputs(), self.bias.len())?;
        if self.weight.iter().chain(self.bias.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("layer `{name}`")));
        }
        Ok(())
    }
}

/// Encoder `input -> hidden -> (mu, log_var)` and decoder
/// `latent -> hidden -> input`.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub enc_hidden: Dense,
    pub enc_mu: Dense,
    pub enc_log_var: Dense,
    pub dec_hidden: Dense,
    pub dec_out: Dense,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

pub const LAYER_NAMES: [&str; 5] = ["enc_hidden", "enc_mu", "enc_log_var", "dec_hidden", "dec_out"];

impl VaeModel {
    pub fn new_random(input_dim: usize, hidden: usize, latent_dim: usize, rng: &mut impl Rng) -> Self {
        VaeModel {
            enc_hidden: Dense::glorot(input_dim, hidden, rng),
            enc_mu: Dense::glorot(hidden, latent_dim, rng),
            enc_log_var: Dense::glorot(hidden, latent_dim, rng),
            dec_hidden: Dense::glorot(latent_dim, hidden, rng),
            dec_out: Dense::glorot(hidden, input_dim, rng),
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Logistic,
        }
    }

    pub fn zeros(input_dim: usize, hidden: usize, latent_dim: usize) -> Self {
        VaeModel {
            enc_hidden: Dense::zeros(input_dim, hidden),
            enc_mu: Dense::zeros(hidden, latent_dim),
            enc_log_var: Dense::zeros(hidden, latent_dim),
            dec_hidden: Dense::zeros(latent_dim, hidden),
            dec_out: Dense::zeros(hidden, input_dim),
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Logistic,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.enc_hidden.inputs()
    }

    pub fn hidden(&self) -> usize {
        self.enc_hidden.outputs()
    }

    pub fn latent_dim(&self) -> usize {
        self.enc_mu.outputs()
    }

    pub fn layers(&self) -> [&Dense; 5] {
        [&self.enc_hidden, &self.enc_mu, &self.enc_log_var, &self.dec_hidden, &self.dec_out]
    }

    pub fn layers_mut(&mut self) -> [&mut Dense; 5] {
        [
            &mut self.enc_hidden,
            &mut self.enc_mu,
            &mut self.enc_log_var,
            &mut self.dec_hidden,
            &mut self.dec_out,
        ]
    }

    /// Checks that layer shapes chain together and every weight is finite.
    pub fn validate(&self) -> Result<()> {
        for (layer, name) in self.layers().iter().zip(LAYER_NAMES) {
            layer.check(name)?;
        }
        let (d_in, h, d) = (self.input_dim(), self.hidden(), self.latent_dim());
        check_dim(h, self.enc_mu.inputs())?;
        check_dim(h, self.enc_log_var.inputs())?;
        check_dim(d, self.enc_log_var.outputs())?;
        check_dim(d, self.dec_hidden.inputs())?;
        check_dim(self.dec_hidden.outputs(), self.dec_out.inputs())?;
        check_dim(d_in, self.dec_out.outputs())
    }

    /// Batched encoder: rows of `x` are images.
    pub fn encode_batch(&self, x: &ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        check_dim(self.input_dim(), x.ncols())?;
        let mut h = self.enc_hidden.forward(x);
        self.hidden_activation.apply(&mut h);
        Ok((self.enc_mu.forward(&h.view()), self.enc_log_var.forward(&h.view())))
    }

    /// Batched decoder: rows of `z` are latent points.
    pub fn decode_batch(&self, z: &ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim(self.latent_dim(), z.ncols())?;
        let mut h = self.dec_hidden.forward(z);
        self.hidden_activation.apply(&mut h);
        let mut out = self.dec_out.forward(&h.view());
        self.output_activation.apply(&mut out);
        Ok(out)
    }

    /// `(mu, log_var)` for one flattened image.
    pub fn encode(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        let (mu, lv) = self.encode_batch(&view)?;
        Ok((mu.row(0).to_vec(), lv.row(0).to_vec()))
    }

    /// Pixel probabilities for one latent point.
    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, z.len()), z).expect("row vector");
        Ok(self.decode_batch(&view)?.row(0).to_vec())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }
}

/// `z = mu + exp(log_var / 2) * eps`, `eps ~ N(0, I)` drawn from `rng`.
pub fn reparam_sample(mu: &[f64], log_var: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    let eps: Vec<f64> = (0..mu.len()).map(|_| rng.sample(StandardNormal)).collect();
    reparam_with_noise(mu, log_var, &eps)
}

pub fn reparam_with_noise(mu: &[f64], log_var: &[f64], eps: &[f64]) -> Vec<f64> {
    mu.iter()
        .zip(log_var)
        .zip(eps)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect()
}

/// Binary cross-entropy of `x` under pixel probabilities `p`, after clamping.
pub fn reconstruction_bce(x: ArrayView1<f64>, p: ArrayView1<f64>) -> f64 {
    x.iter()
        .zip(p.iter())
        .map(|(&xi, &pi)| {
            let pc = pi.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            -(xi * pc.ln() + (1.0 - xi) * (1.0 - pc).ln())
        })
        .sum()
}

/// `KL(N(mu, diag(exp(log_var))) || N(0, I))`.
pub fn kl_to_standard_normal(mu: &[f64], log_var: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(log_var)
        .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

/// Loss decomposition for one example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboTerms {
    /// `rec + beta * kl`, the negative ELBO up to constants.
    pub loss: f64,
    pub rec: f64,
    pub kl: f64,
}

/// Evaluates the ELBO terms of image `x` with the latent code `z`.
pub fn elbo_terms(model: &VaeModel, x: &[f64], z: &[f64], beta: f64) -> Result<ElboTerms> {
    if !(beta >= 0.0) {
        return Err(Error::invalid("beta", format!("must be >= 0, got {beta}")));
    }
    let (mu, log_var) = model.encode(x)?;
    let p = model.decode(z)?;
    let rec = reconstruction_bce(ArrayView1::from(x), ArrayView1::from(&p));
    let kl = kl_to_standard_normal(&mu, &log_var);
    Ok(ElboTerms {
        loss: rec + beta * kl,
        rec,
        kl,
    })
}

/// Gradients with the same layout as the model.
pub type Gradients = VaeModel;

/// Mean loss over a batch together with its exact gradient, using the given
/// standard-normal draws (one row per example) for the reparametrization.
pub fn loss_and_grads_with_noise(
    model: &VaeModel,
    x: &ArrayView2<f64>,
    eps: &ArrayView2<f64>,
    beta: f64,
) -> Result<(ElboTerms, Gradients)> {
    let batch = x.nrows();
    if batch == 0 {
        return Err(Error::Empty("batch"));
    }
    check_dim(model.input_dim(), x.ncols())?;
    check_dim(batch, eps.nrows())?;
    check_dim(model.latent_dim(), eps.ncols())?;
    let act = model.hidden_activation;
    let out_act = model.output_activation;
    let inv_b = 1.0 / batch as f64;

    // forward
    let mut h1 = model.enc_hidden.forward(x);
    act.apply(&mut h1);
    let mu = model.enc_mu.forward(&h1.view());
    let log_var = model.enc_log_var.forward(&h1.view());
    let sigma = log_var.mapv(|lv| (0.5 * lv).exp());
    let z = &mu + &(&sigma * eps);
    let mut h3 = model.dec_hidden.forward(&z.view());
    act.apply(&mut h3);
    let mut p = model.dec_out.forward(&h3.view());
    out_act.apply(&mut p);

    let mut rec = 0.0;
    for (xr, pr) in x.outer_iter().zip(p.outer_iter()) {
        rec += reconstruction_bce(xr, pr);
    }
    let mut kl = 0.0;
    for (mr, lr) in mu.outer_iter().zip(log_var.outer_iter()) {
        kl += kl_to_standard_normal(mr.as_slice().unwrap(), lr.as_slice().unwrap());
    }
    let terms = ElboTerms {
        loss: (rec + beta * kl) * inv_b,
        rec: rec * inv_b,
        kl: kl * inv_b,
    };

    // backward
    let mut d_out = Array2::<f64>::zeros(p.raw_dim());
    Zip::from(&mut d_out).and(&p).and(x).for_each(|d, &pi, &xi| {
        *d = if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&pi) {
            0.0
        } else if out_act == Activation::Logistic {
            (pi - xi) * inv_b
        } else {
            (-xi / pi + (1.0 - xi) / (1.0 - pi)) * out_act.derivative_from_output(pi) * inv_b
        };
    });
    let mut grads = VaeModel::zeros(model.input_dim(), model.hidden(), model.latent_dim());
    grads.hidden_activation = act;
    grads.output_activation = out_act;

    grads.dec_out.weight = d_out.t().dot(&h3);
    grads.dec_out.bias = d_out.sum_axis(Axis(0));
    let mut d_h3 = d_out.dot(&model.dec_out.weight);
    Zip::from(&mut d_h3).and(&h3).for_each(|d, &h| *d *= act.derivative_from_output(h));

    grads.dec_hidden.weight = d_h3.t().dot(&z);
    grads.dec_hidden.bias = d_h3.sum_axis(Axis(0));
    let d_z = d_h3.dot(&model.dec_hidden.weight);

    let mut d_mu = d_z.clone();
    Zip::from(&mut d_mu).and(&mu).for_each(|d, &m| *d += beta * m * inv_b);
    let mut d_lv = d_z;
    Zip::from(&mut d_lv)
        .and(eps)
        .and(&sigma)
        .for_each(|d, &e, &s| *d = *d * 0.5 * e * s + beta * 0.5 * (s * s - 1.0) * inv_b);

    grads.enc_mu.weight = d_mu.t().dot(&h1);
    grads.enc_mu.bias = d_mu.sum_axis(Axis(0));
    grads.enc_log_var.weight = d_lv.t().dot(&h1);
    grads.enc_log_var.bias = d_lv.sum_axis(Axis(0));
    let mut d_h1 = d_mu.dot(&model.enc_mu.weight) + d_lv.dot(&model.enc_log_var.weight);
    Zip::from(&mut d_h1).and(&h1).for_each(|d, &h| *d *= act.derivative_from_output(h));

    grads.enc_hidden.weight = d_h1.t().dot(x);
    grads.enc_hidden.bias = d_h1.sum_axis(Axis(0));

    Ok((terms, grads))
}

/// Mean loss of a batch with fixed noise, without gradients.
pub fn batch_loss_with_noise(model: &VaeModel, x: &ArrayView2<f64>, eps: &ArrayView2<f64>, beta: f64) -> Result<ElboTerms> {
    let (mu, log_var) = model.encode_batch(x)?;
    check_dim(mu.nrows(), eps.nrows())?;
    let z = &mu + &(&log_var.mapv(|lv| (0.5 * lv).exp()) * eps);
    let p = model.decode_batch(&z.view())?;
    let inv_b = 1.0 / x.nrows() as f64;
    let rec: f64 = x.outer_iter().zip(p.outer_iter()).map(|(xr, pr)| reconstruction_bce(xr, pr)).sum();
    let kl: f64 = mu
        .outer_iter()
        .zip(log_var.outer_iter())
        .map(|(m, l)| kl_to_standard_normal(m.as_slice().unwrap(), l.as_slice().unwrap()))
        .sum();
    Ok(ElboTerms {
        loss: (rec + beta * kl) * inv_b,
        rec: rec * inv_b,
        kl: kl * inv_b,
    })
}

/// Exact gradients of the mean per-example loss with one reparametrized
/// sample per example, drawn from `rng`.
pub fn backprop_grads(model: &VaeModel, batch: &ArrayView2<f64>, beta: f64, rng: &mut impl Rng) -> Result<(ElboTerms, Gradients)> {
    let eps = Array2::from_shape_simple_fn((batch.nrows(), model.latent_dim()), || rng.sample(StandardNormal));
    loss_and_grads_with_noise(model, batch, &eps.view(), beta)
}

/// Central finite-difference Jacobian (`D x d`) of the decoder's output
/// probabilities at `z`.
pub fn decoder_jacobian(model: &VaeModel, z: &[f64], h: f64) -> Result<Array2<f64>> {
    if !(h > 0.0) {
        return Err(Error::invalid("h", format!("must be > 0, got {h}")));
    }
    check_dim(model.latent_dim(), z.len())?;
    let d = z.len();
    let mut probes = Array2::<f64>::zeros((2 * d, d));
    for l in 0..d {
        probes.row_mut(2 * l).assign(&ArrayView1::from(z));
        probes.row_mut(2 * l + 1).assign(&ArrayView1::from(z));
        probes[[2 * l, l]] += h;
        probes[[2 * l + 1, l]] -= h;
    }
    let out = model.decode_batch(&probes.view())?;
    let mut jac = Array2::<f64>::zeros((model.input_dim(), d));
    for l in 0..d {
        let col = (&out.row(2 * l) - &out.row(2 * l + 1)) / (2.0 * h);
        jac.column_mut(l).assign(&col);
    }
    Ok(jac)
}

/// `J^T J` for the decoder Jacobian at `z`.
pub fn pullback_metric(model: &VaeModel, z: &[f64], h: f64) -> Result<Array2<f64>> {
    let jac = decoder_jacobian(model, z, h)?;
    Ok(jac.t().dot(&jac))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_model(seed: u64) -> VaeModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = VaeModel::new_random(12, 6, 2, &mut rng);
        // nonzero biases so their gradients are exercised
        for layer in m.layers_mut() {
            layer.bias.mapv_inplace(|_| rng.random_range(-0.3..0.3));
        }
        m
    }

    fn batch(seed: u64, rows: usize, cols: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || if rng.random_bool(0.4) { 1.0 } else { 0.0 })
    }

    #[test]
    fn zero_model_encodes_to_the_prior_and_decodes_to_one_half() {
        let m = VaeModel::zeros(1024, 8, 2);
        let (mu, lv) = m.encode(&vec![1.0; 1024]).unwrap();
        assert_eq!(mu, vec![0.0, 0.0]);
        assert_eq!(lv, vec![0.0, 0.0]);
        assert!(m.decode(&[3.0, -1.0]).unwrap().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn forward_passes_are_deterministic_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = VaeModel::new_random(1024, 400, 2, &mut rng);
        let x: Vec<f64> = (0..1024).map(|_| rng.random_range(0.0..1.0)).collect();
        let a = m.encode(&x).unwrap();
        assert_eq!(a, m.encode(&x).unwrap());
        assert!(a.0.iter().chain(&a.1).all(|v| v.is_finite()));
        for z in [[0.0, 0.0], [50.0, -50.0], [1e6, 1e6]] {
            let p = m.decode(&z).unwrap();
            assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
            assert_eq!(p, m.decode(&z).unwrap());
        }
        assert!(m.encode(&[0.0; 10]).is_err());
        assert!(m.decode(&[0.0; 3]).is_err());
    }

    #[test]
    fn reparametrization_examples() {
        let z = reparam_with_noise(&[1.0, -2.0], &[-60.0, -60.0], &[3.0, -4.0]);
        assert!((z[0] - 1.0).abs() < 1e-12 && (z[1] + 2.0).abs() < 1e-12);
        let z = reparam_with_noise(&[1.0, -2.0], &[0.0, 0.0], &[0.25, 0.5]);
        assert_eq!(z, vec![1.25, -1.5]);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let (mu, lv) = ([0.7, -1.3], [0.4f64, -0.6f64]);
        let mut sum = [0.0; 2];
        for _ in 0..n {
            let z = reparam_sample(&mu, &lv, &mut rng);
            sum[0] += z[0];
            sum[1] += z[1];
        }
        for i in 0..2 {
            let sd = (0.5 * lv[i]).exp();
            assert!((sum[i] / n as f64 - mu[i]).abs() < 4.0 * sd / (n as f64).sqrt());
        }
    }

    #[test]
    fn elbo_examples() {
        let m = VaeModel::zeros(1024, 4, 2);
        let x: Vec<f64> = (0..1024).map(|i| (i % 2) as f64).collect();
        let t = elbo_terms(&m, &x, &[0.0, 0.0], 1.0).unwrap();
        assert!((t.rec - 709.782712893384).abs() < 1e-9);
        assert_eq!(t.kl, 0.0);
        assert_eq!(kl_to_standard_normal(&[1.0, 0.0], &[0.0, 0.0]), 0.5);
        assert!(elbo_terms(&m, &x, &[0.0, 0.0], -1.0).is_err());
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        for seed in 0..3 {
            let m = small_model(seed);
            let x = batch(seed + 100, 5, 12);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 200);
            let eps = Array2::from_shape_simple_fn((5, 2), || rng.sample(StandardNormal));
            let beta = 0.7;
            let (_, grads) = loss_and_grads_with_noise(&m, &x.view(), &eps.view(), beta).unwrap();
            let h = 1e-4;
            for (li, name) in LAYER_NAMES.iter().enumerate() {
                let n_w = m.layers()[li].weight.len();
                let n_b = m.layers()[li].bias.len();
                for idx in 0..n_w + n_b {
                    let perturb = |delta: f64| {
                        let mut p = m.clone();
                        let layer = &mut p.layers_mut()[li];
                        if idx < n_w {
                            let c = layer.weight.ncols();
                            layer.weight[[idx / c, idx % c]] += delta;
                        } else {
                            layer.bias[idx - n_w] += delta;
                        }
                        batch_loss_with_noise(&p, &x.view(), &eps.view(), beta).unwrap().loss
                    };
                    let fd = (perturb(h) - perturb(-h)) / (2.0 * h);
                    let layer = grads.layers()[li];
                    let an = if idx < n_w {
                        let c = layer.weight.ncols();
                        layer.weight[[idx / c, idx % c]]
                    } else {
                        layer.bias[idx - n_w]
                    };
                    let rel = (an - fd).abs() / (an.abs().max(fd.abs()).max(1e-6));
                    assert!(rel < 1e-4 || (an - fd).abs() < 1e-9, "{name}[{idx}]: {an} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn output_bias_gradient_vanishes_when_targets_match_predictions() {
        // an encoder that ignores its input maps every image to the same
        // code, so with zero noise the target can equal the prediction
        let mut frozen = small_model(9);
        frozen.enc_hidden.weight.fill(0.0);
        let z_noise = Array2::<f64>::zeros((3, 2));
        let (mu, _) = frozen.encode_batch(&batch(9, 3, 12).view()).unwrap();
        let target = frozen.decode_batch(&mu.view()).unwrap();
        let (_, g) = loss_and_grads_with_noise(&frozen, &target.view(), &z_noise.view(), 0.0).unwrap();
        assert!(g.dec_out.bias.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn gradient_is_a_batch_mean_independent_of_order() {
        let m = small_model(4);
        let x = batch(4, 6, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let eps = Array2::from_shape_simple_fn((6, 2), || rng.sample(StandardNormal));
        let order = [3usize, 0, 5, 1, 4, 2];
        let xs = x.select(Axis(0), &order);
        let es = eps.select(Axis(0), &order);
        let (_, a) = loss_and_grads_with_noise(&m, &x.view(), &eps.view(), 1.0).unwrap();
        let (_, b) = loss_and_grads_with_noise(&m, &xs.view(), &es.view(), 1.0).unwrap();
        for (la, lb) in a.layers().iter().zip(b.layers()) {
            for (u, v) in la.weight.iter().zip(lb.weight.iter()).chain(la.bias.iter().zip(lb.bias.iter())) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_beta_ignores_the_kl_term() {
        let m = small_model(6);
        let x = batch(6, 4, 12);
        let eps = Array2::<f64>::zeros((4, 2));
        let (t, g0) = loss_and_grads_with_noise(&m, &x.view(), &eps.view(), 0.0).unwrap();
        assert_eq!(t.loss, t.rec);
        // with eps = 0 and beta = 0 the log-variance head receives no signal
        assert!(g0.enc_log_var.weight.iter().all(|&v| v == 0.0));
    }

    fn linear_decoder(w: &Array2<f64>) -> VaeModel {
        let (d_out, d) = w.dim();
        let mut m = VaeModel::zeros(d_out, d, d);
        m.dec_hidden.weight = Array2::eye(d);
        m.dec_out.weight = w.clone();
        m.hidden_activation = Activation::Identity;
        m.output_activation = Activation::Identity;
        m
    }

    #[test]
    fn jacobian_of_a_linear_decoder_is_its_weight() {
        let w = Array2::from_shape_fn((7, 2), |(i, j)| (i as f64 - 3.0) * 0.3 + j as f64 * 0.7);
        let m = linear_decoder(&w);
        let jac = decoder_jacobian(&m, &[0.4, -1.2], 1e-5).unwrap();
        assert_eq!(jac.dim(), (7, 2));
        for (a, b) in jac.iter().zip(w.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
        let g = pullback_metric(&m, &[0.4, -1.2], 1e-5).unwrap();
        let wtw = w.t().dot(&w);
        for (a, b) in g.iter().zip(wtw.iter()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn jacobian_estimates_agree_across_step_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = VaeModel::new_random(64, 16, 2, &mut rng);
        let z = [0.3, -0.2];
        let j1 = decoder_jacobian(&m, &z, 1e-3).unwrap();
        let j2 = decoder_jacobian(&m, &z, 5e-4).unwrap();
        let j4 = decoder_jacobian(&m, &z, 2.5e-4).unwrap();
        let d12 = (&j1 - &j2).iter().map(|v| v.abs()).fold(0.0, f64::max);
        let d24 = (&j2 - &j4).iter().map(|v| v.abs()).fold(0.0, f64::max);
        // second-order scheme: halving h shrinks the difference about four-fold
        assert!(d24 < d12 / 3.0, "{d12} {d24}");
        assert!(decoder_jacobian(&m, &z, 0.0).is_err());
    }

    #[test]
    fn pullback_is_symmetric_positive_semidefinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let m = VaeModel::new_random(64, 16, 2, &mut rng);
        for _ in 0..20 {
            let z = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let g = pullback_metric(&m, &z, 1e-5).unwrap();
            assert!((g[[0, 1]] - g[[1, 0]]).abs() < 1e-10);
            let tr = g[[0, 0]] + g[[1, 1]];
            let det = g[[0, 0]] * g[[1, 1]] - g[[0, 1]] * g[[1, 0]];
            let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
            assert!(tr / 2.0 - disc >= -1e-10);
        }
    }
}
