//! Hamiltonian Monte Carlo on the Riemannian uniform distribution.
//!
//! The target is `p(z) ∝ sqrt(det G(z))`, so the potential energy is
//! `U(z) = -1/2 log det G(z)` and the force is `1/2 ∇ log det G(z)`. The
//! kinetic energy is Euclidean, `K(v) = 1/2 v^T v`, and the normalizing
//! constant of `p` never enters: it drops out of the gradient and cancels in
//! the acceptance ratio.
//!
//! [`hmc_sample`] runs one independent chain per requested sample and keeps
//! each chain's final state. Chain `i` draws from its own random stream
//! derived from `(seed, i)`, so the output does not depend on how chains are
//! scheduled across threads.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{GridDensity, MetricField};
use crate::rng::{stream_rng, StreamRng};

/// How each chain picks its starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainInit {
    /// A centroid drawn uniformly at random per chain.
    RandomCentroid,
    /// The same given point for every chain.
    Point(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmcConfig {
    pub n_samples: usize,
    /// Metropolis steps per chain.
    pub chain_length: usize,
    pub n_leapfrog: usize,
    pub step_size: f64,
    pub seed: u64,
    pub init: ChainInit,
    /// Keep a per-proposal log of energies and uniform draws.
    #[serde(default)]
    pub record_trace: bool,
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig {
            n_samples: 1,
            chain_length: 100,
            n_leapfrog: 10,
            step_size: 0.01,
            seed: 0,
            init: ChainInit::RandomCentroid,
            record_trace: false,
        }
    }
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::invalid("n_samples", "must be at least 1"));
        }
        if self.chain_length == 0 {
            return Err(Error::invalid("chain_length", "must be at least 1"));
        }
        if self.n_leapfrog == 0 {
            return Err(Error::invalid("n_leapfrog", "must be at least 1"));
        }
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid("step_size", format!("must be finite and >= 0, got {}", self.step_size)));
        }
        Ok(())
    }
}

/// Accept/reject bookkeeping for one chain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub proposed: u64,
    pub accepted: u64,
    /// Proposals whose end energy was not finite (always rejected).
    pub non_finite: u64,
    /// Sum of `|H_end - H_start|` over the finite proposals.
    pub sum_abs_delta_h: f64,
}

impl ChainStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn absorb(&mut self, other: &ChainStats) {
        self.proposed += other.proposed;
        self.accepted += other.accepted;
        self.non_finite += other.non_finite;
        self.sum_abs_delta_h += other.sum_abs_delta_h;
    }
}

/// One Metropolis decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub chain: usize,
    pub step: usize,
    pub h_start: f64,
    pub h_end: f64,
    pub uniform: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub samples: Vec<Vec<f64>>,
    /// Chain that produced each sample.
    pub chain_index: Vec<usize>,
    pub chains: Vec<ChainStats>,
    pub acceptance_rate: f64,
    pub config: HmcConfig,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<ProposalRecord>>,
}

impl SampleBatch {
    pub fn totals(&self) -> ChainStats {
        let mut total = ChainStats::default();
        for c in &self.chains {
            total.absorb(c);
        }
        total
    }
}

/// `H(z, v) = -1/2 log det G(z) + 1/2 v^T v`.
pub fn hamiltonian(field: &MetricField, z: &[f64], v: &[f64]) -> Result<f64> {
    check_dim(field.dim(), v.len())?;
    let log_det = field.log_det_metric(z)?;
    Ok(-0.5 * log_det + kinetic(v))
}

fn kinetic(v: &[f64]) -> f64 {
    0.5 * v.iter().map(|x| x * x).sum::<f64>()
}

/// State at the end of a trajectory along with the quantities the next
/// trajectory needs.
struct Endpoint {
    z: Vec<f64>,
    v: Vec<f64>,
    log_det: f64,
    grad: Vec<f64>,
}

/// Half-kick / drift / half-kick, `n_steps` times, starting from a known
/// `grad = ∇ log det G(z)`. Returns `None` as soon as a non-finite value
/// appears.
fn integrate(
    field: &MetricField,
    mut z: Vec<f64>,
    mut v: Vec<f64>,
    mut log_det: f64,
    mut grad: Vec<f64>,
    eps: f64,
    n_steps: usize,
) -> Option<Endpoint> {
    // force = 1/2 ∇ log det G, scaled by eps/2 for each half kick
    let half = 0.25 * eps;
    for _ in 0..n_steps {
        for (vi, gi) in v.iter_mut().zip(&grad) {
            *vi += half * gi;
        }
        for (zi, vi) in z.iter_mut().zip(&v) {
            *zi += eps * vi;
        }
        let (ld, g) = field.log_det_and_grad(&z).ok()?;
        log_det = ld;
        grad = g;
        for (vi, gi) in v.iter_mut().zip(&grad) {
            *vi += half * gi;
        }
        if !(log_det.is_finite() && v.iter().chain(&z).all(|x| x.is_finite())) {
            return None;
        }
    }
    Some(Endpoint { z, v, log_det, grad })
}

/// Integrates Hamilton's equations with the leapfrog scheme.
pub fn leapfrog(field: &MetricField, z: &[f64], v: &[f64], eps: f64, n_steps: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dim(field.dim(), z.len())?;
    check_dim(field.dim(), v.len())?;
    if !(eps >= 0.0) {
        return Err(Error::invalid("eps", format!("must be >= 0, got {eps}")));
    }
    let (log_det, grad) = field.log_det_and_grad(z)?;
    integrate(field, z.to_vec(), v.to_vec(), log_det, grad, eps, n_steps)
        .map(|e| (e.z, e.v))
        .ok_or_else(|| Error::NonFinite("leapfrog trajectory".into()))
}

fn initial_point(field: &MetricField, init: &ChainInit, rng: &mut StreamRng) -> Result<Vec<f64>> {
    match init {
        ChainInit::RandomCentroid => {
            let k = field.centroids().len();
            if k == 0 {
                return Err(Error::invalid("init", "random-centroid initialization needs at least one centroid"));
            }
            Ok(field.centroids()[rng.random_range(0..k)].mu().to_vec())
        }
        ChainInit::Point(p) => {
            check_dim(field.dim(), p.len())?;
            Ok(p.clone())
        }
    }
}

/// A Markov chain under construction.
struct Chain<'a> {
    field: &'a MetricField,
    index: usize,
    rng: StreamRng,
    z: Vec<f64>,
    log_det: f64,
    grad: Vec<f64>,
    stats: ChainStats,
    trace: Option<Vec<ProposalRecord>>,
    step: usize,
}

impl<'a> Chain<'a> {
    fn start(field: &'a MetricField, cfg: &HmcConfig, index: usize) -> Result<Self> {
        let mut rng = stream_rng(cfg.seed, index as u64);
        let z = initial_point(field, &cfg.init, &mut rng)?;
        let (log_det, grad) = field.log_det_and_grad(&z)?;
        Ok(Chain {
            field,
            index,
            rng,
            z,
            log_det,
            grad,
            stats: ChainStats::default(),
            trace: cfg.record_trace.then(Vec::new),
            step: 0,
        })
    }

    /// One velocity refresh, one trajectory, one Metropolis decision.
    fn transition(&mut self, eps: f64, n_leapfrog: usize) {
        let v: Vec<f64> = (0..self.z.len()).map(|_| self.rng.sample(StandardNormal)).collect();
        let h_start = -0.5 * self.log_det + kinetic(&v);
        let end = integrate(self.field, self.z.clone(), v, self.log_det, self.grad.clone(), eps, n_leapfrog);
        let uniform: f64 = self.rng.random();

        let h_end = end.as_ref().map_or(f64::NAN, |e| -0.5 * e.log_det + kinetic(&e.v));
        self.stats.proposed += 1;
        let accepted = if h_end.is_finite() {
            self.stats.sum_abs_delta_h += (h_end - h_start).abs();
            uniform < (h_start - h_end).exp()
        } else {
            self.stats.non_finite += 1;
            false
        };
        if accepted {
            let e = end.expect("finite energy implies a trajectory");
            self.stats.accepted += 1;
            self.z = e.z;
            self.log_det = e.log_det;
            self.grad = e.grad;
        }
        if let Some(trace) = self.trace.as_mut() {
            trace.push(ProposalRecord {
                chain: self.index,
                step: self.step,
                h_start,
                h_end,
                uniform,
                accepted,
            });
        }
        self.step += 1;
    }
}

struct ChainOutcome {
    sample: Vec<f64>,
    stats: ChainStats,
    trace: Option<Vec<ProposalRecord>>,
}

fn run_chain(field: &MetricField, cfg: &HmcConfig, index: usize) -> Result<ChainOutcome> {
    let mut chain = Chain::start(field, cfg, index)?;
    for _ in 0..cfg.chain_length {
        chain.transition(cfg.step_size, cfg.n_leapfrog);
    }
    Ok(ChainOutcome {
        sample: chain.z,
        stats: chain.stats,
        trace: chain.trace,
    })
}

fn assemble(cfg: &HmcConfig, samples: Vec<Vec<f64>>, chain_index: Vec<usize>, chains: Vec<ChainStats>, traces: Option<Vec<ProposalRecord>>) -> SampleBatch {
    let mut total = ChainStats::default();
    for c in &chains {
        total.absorb(c);
    }
    SampleBatch {
        samples,
        chain_index,
        chains,
        acceptance_rate: total.acceptance_rate(),
        config: cfg.clone(),
        seed: cfg.seed,
        trace: traces,
    }
}

/// Draws `cfg.n_samples` points, each the final state of an independent
/// chain of `cfg.chain_length` HMC transitions.
///
/// Chains run on the current rayon thread pool; results are ordered by
/// chain index, so the batch is bit-identical for any thread count.
pub fn hmc_sample(field: &MetricField, cfg: &HmcConfig) -> Result<SampleBatch> {
    cfg.validate()?;
    let outcomes: Vec<ChainOutcome> = (0..cfg.n_samples)
        .into_par_iter()
        .map(|i| run_chain(field, cfg, i))
        .collect::<Result<_>>()?;

    let mut samples = Vec::with_capacity(outcomes.len());
    let mut chains = Vec::with_capacity(outcomes.len());
    let mut trace = cfg.record_trace.then(Vec::new);
    for o in outcomes {
        samples.push(o.sample);
        chains.push(o.stats);
        if let (Some(all), Some(t)) = (trace.as_mut(), o.trace) {
            all.extend(t);
        }
    }
    let chain_index = (0..samples.len()).collect();
    Ok(assemble(cfg, samples, chain_index, chains, trace))
}

/// Diagnostic mode: one long chain, discarding `burn_in` transitions and then
/// keeping every `thin`-th state until `cfg.n_samples` are collected.
/// `cfg.chain_length` is ignored.
pub fn hmc_single_chain(field: &MetricField, cfg: &HmcConfig, burn_in: usize, thin: usize) -> Result<SampleBatch> {
    cfg.validate()?;
    if thin == 0 {
        return Err(Error::invalid("thin", "must be at least 1"));
    }
    let mut chain = Chain::start(field, cfg, 0)?;
    for _ in 0..burn_in {
        chain.transition(cfg.step_size, cfg.n_leapfrog);
    }
    let mut samples = Vec::with_capacity(cfg.n_samples);
    while samples.len() < cfg.n_samples {
        for _ in 0..thin {
            chain.transition(cfg.step_size, cfg.n_leapfrog);
        }
        samples.push(chain.z.clone());
    }
    let chain_index = vec![0; samples.len()];
    Ok(assemble(cfg, samples, chain_index, vec![chain.stats], chain.trace))
}

/// Summary of a batch's Metropolis decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceReport {
    pub acceptance_rate: f64,
    pub per_chain: Vec<f64>,
    /// Mean `|ΔH|` over proposals with a finite end energy.
    pub mean_abs_delta_h: f64,
    pub proposals: u64,
    pub non_finite: u64,
}

pub fn acceptance_diagnostics(batch: &SampleBatch) -> AcceptanceReport {
    let total = batch.totals();
    let finite = total.proposed - total.non_finite;
    AcceptanceReport {
        acceptance_rate: total.acceptance_rate(),
        per_chain: batch.chains.iter().map(ChainStats::acceptance_rate).collect(),
        mean_abs_delta_h: if finite == 0 { 0.0 } else { total.sum_abs_delta_h / finite as f64 },
        proposals: total.proposed,
        non_finite: total.non_finite,
    }
}

/// Total-variation distance between the histogram of `samples` over the grid's
/// cells and the grid masses. Samples outside the box count as mass the grid
/// does not have.
pub fn histogram_tv_distance(grid: &GridDensity, samples: &[Vec<f64>]) -> f64 {
    let n = grid.resolution();
    let mut counts = vec![0u64; n * n];
    let mut outside = 0u64;
    for s in samples {
        match grid.cell_of(s) {
            Some((i, j)) => counts[i * n + j] += 1,
            None => outside += 1,
        }
    }
    let total = samples.len().max(1) as f64;
    let inside: f64 = counts
        .iter()
        .zip(grid.masses())
        .map(|(&c, m)| (c as f64 / total - m).abs())
        .sum();
    0.5 * (inside + outside as f64 / total)
}
