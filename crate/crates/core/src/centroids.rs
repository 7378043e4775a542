//! Centroid selection and metric assembly.
//!
//! The embedded training set is clustered with PAM k-medoids on the posterior
//! means, the bandwidth `rho` is set to the largest nearest-neighbour distance
//! among the chosen medoids, and each medoid contributes its inverse
//! posterior covariance to the metric.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{Centroid, MetricField};
use crate::rng::{stream_rng, STREAM_MEDOIDS};

/// Default `lambda` for [`build_metric_field`].
pub const DEFAULT_LAMBDA: f64 = 1e-2;

/// One encoded training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub mu: Vec<f64>,
    /// Elementwise log of the posterior covariance diagonal.
    pub log_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub dim: usize,
    pub records: Vec<EmbeddingRecord>,
}

impl EmbeddingSet {
    pub fn new(dim: usize, records: Vec<EmbeddingRecord>) -> Result<Self> {
        let set = EmbeddingSet { dim, records };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        for r in &self.records {
            check_dim(self.dim, r.mu.len())?;
            check_dim(self.dim, r.log_var.len())?;
            if r.mu.iter().chain(&r.log_var).any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("embedding `{}`", r.id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn means(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.mu.clone()).collect()
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Sum over points of the distance to the nearest medoid.
pub fn medoid_cost(points: &[Vec<f64>], medoids: &[usize]) -> f64 {
    points
        .iter()
        .map(|p| medoids.iter().map(|&m| euclidean(p, &points[m])).fold(f64::INFINITY, f64::min))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Indices into the input, in selection order.
    pub medoids: Vec<usize>,
    pub cost: f64,
    /// Cost after BUILD and after every accepted swap.
    pub cost_history: Vec<f64>,
}

/// Nearest and second-nearest medoid bookkeeping for every point.
struct Assignment {
    nearest: Vec<usize>,
    d_nearest: Vec<f64>,
    d_second: Vec<f64>,
}

impl Assignment {
    fn compute(points: &[Vec<f64>], medoids: &[usize]) -> Self {
        let n = points.len();
        let mut nearest = vec![0; n];
        let mut d_nearest = vec![f64::INFINITY; n];
        let mut d_second = vec![f64::INFINITY; n];
        for (o, p) in points.iter().enumerate() {
            for (slot, &m) in medoids.iter().enumerate() {
                let d = euclidean(p, &points[m]);
                if d < d_nearest[o] {
                    d_second[o] = d_nearest[o];
                    d_nearest[o] = d;
                    nearest[o] = slot;
                } else if d < d_second[o] {
                    d_second[o] = d;
                }
            }
        }
        Assignment {
            nearest,
            d_nearest,
            d_second,
        }
    }

    fn cost(&self) -> f64 {
        self.d_nearest.iter().sum()
    }
}

/// Random starting configurations tried by [`k_medoids`] besides BUILD.
pub const DEFAULT_RESTARTS: usize = 4;

/// PAM k-medoids: greedy BUILD, then SWAP until no exchange of a medoid with
/// a non-medoid lowers the total distance.
///
/// SWAP alone stops at the first configuration no single exchange improves,
/// which on small sets can sit well above the optimum. The search is therefore
/// repeated from [`DEFAULT_RESTARTS`] seeded random configurations and the
/// cheapest result is kept (BUILD wins ties).
pub fn k_medoids(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Clustering> {
    k_medoids_with_restarts(points, k, seed, DEFAULT_RESTARTS)
}

/// [`k_medoids`] with an explicit number of random restarts; `0` is plain
/// BUILD + SWAP.
///
/// Each SWAP round evaluates all `k (n - k)` exchanges in `O(n^2)` using the
/// nearest/second-nearest distances of every point, and applies the best one.
pub fn k_medoids_with_restarts(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Result<Clustering> {
    let n = points.len();
    if n == 0 {
        return Err(Error::Empty("points to cluster"));
    }
    if k == 0 || k > n {
        return Err(Error::invalid("k", format!("must be in 1..={n}, got {k}")));
    }
    let d = points[0].len();
    for p in points {
        check_dim(d, p.len())?;
    }

    let mut rng = stream_rng(seed, STREAM_MEDOIDS);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut best = swap_phase(points, build_phase(points, k, &order), &order);
    if k < n {
        for _ in 0..restarts {
            let start = rand::seq::index::sample(&mut rng, n, k).into_vec();
            let candidate = swap_phase(points, start, &order);
            if candidate.cost < best.cost {
                best = candidate;
            }
        }
    }
    Ok(best)
}

fn build_phase(points: &[Vec<f64>], k: usize, order: &[usize]) -> Vec<usize> {
    let n = points.len();
    let mut medoids = Vec::with_capacity(k);
    let mut is_medoid = vec![false; n];
    let mut d_nearest = vec![f64::INFINITY; n];
    for _ in 0..k {
        let mut best = None;
        let mut best_cost = f64::INFINITY;
        for &c in order {
            if is_medoid[c] {
                continue;
            }
            let cost: f64 = points
                .iter()
                .zip(&d_nearest)
                .map(|(p, &dn)| dn.min(euclidean(p, &points[c])))
                .sum();
            if cost < best_cost {
                best_cost = cost;
                best = Some(c);
            }
        }
        let c = best.expect("fewer medoids than points");
        is_medoid[c] = true;
        medoids.push(c);
        for (dn, p) in d_nearest.iter_mut().zip(points) {
            *dn = dn.min(euclidean(p, &points[c]));
        }
    }
    medoids
}

fn swap_phase(points: &[Vec<f64>], mut medoids: Vec<usize>, order: &[usize]) -> Clustering {
    let (n, k) = (points.len(), medoids.len());
    let mut is_medoid = vec![false; n];
    for &m in &medoids {
        is_medoid[m] = true;
    }
    let mut assign = Assignment::compute(points, &medoids);
    let mut cost_history = vec![assign.cost()];

    let mut removal = vec![0.0; k];
    let mut delta = vec![0.0; k];
    loop {
        removal.iter_mut().for_each(|r| *r = 0.0);
        for o in 0..n {
            removal[assign.nearest[o]] += assign.d_second[o] - assign.d_nearest[o];
        }
        let mut best: Option<(usize, usize)> = None;
        let mut best_delta = 0.0;
        for &x in order {
            if is_medoid[x] {
                continue;
            }
            delta.copy_from_slice(&removal);
            let mut shared = 0.0;
            for (o, p) in points.iter().enumerate() {
                let dox = euclidean(p, &points[x]);
                let (dn, ds, slot) = (assign.d_nearest[o], assign.d_second[o], assign.nearest[o]);
                if dox < dn {
                    shared += dox - dn;
                    delta[slot] += dn - ds;
                } else if dox < ds {
                    delta[slot] += dox - ds;
                }
            }
            for (slot, &dm) in delta.iter().enumerate() {
                let total = dm + shared;
                if total < best_delta {
                    best_delta = total;
                    best = Some((slot, x));
                }
            }
        }
        // guard against accepting rounding noise as an improvement
        let current = *cost_history.last().unwrap();
        match best {
            Some((slot, x)) if best_delta < -1e-12 * current.max(1.0) => {
                let previous = medoids[slot];
                medoids[slot] = x;
                let next = Assignment::compute(points, &medoids);
                let cost = next.cost();
                if cost >= current {
                    // the incremental estimate disagreed with the recomputed
                    // cost; stop rather than cycle
                    medoids[slot] = previous;
                    break;
                }
                is_medoid[previous] = false;
                is_medoid[x] = true;
                assign = next;
                cost_history.push(cost);
            }
            _ => break,
        }
    }
    Clustering {
        cost: *cost_history.last().unwrap(),
        medoids,
        cost_history,
    }
}

/// `max_i min_{j != i} |c_i - c_j|`.
pub fn compute_rho(centroids: &[Vec<f64>]) -> Result<f64> {
    if centroids.len() < 2 {
        return Err(Error::invalid("centroids", format!("need at least 2 to set rho, got {}", centroids.len())));
    }
    let d = centroids[0].len();
    for c in centroids {
        check_dim(d, c.len())?;
    }
    let rho = centroids
        .iter()
        .enumerate()
        .map(|(i, a)| {
            centroids
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, b)| euclidean(a, b))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(rho)
}

/// Indices of the records that become centroids: all of them when
/// `k >= embeddings.len()`, PAM medoids otherwise.
pub fn select_centroids(embeddings: &EmbeddingSet, k: usize, seed: u64) -> Result<Vec<usize>> {
    if embeddings.is_empty() {
        return Err(Error::Empty("embeddings"));
    }
    if k == 0 {
        return Err(Error::invalid("k", "must be at least 1"));
    }
    if k >= embeddings.len() {
        return Ok((0..embeddings.len()).collect());
    }
    Ok(k_medoids(&embeddings.means(), k, seed)?.medoids)
}

/// Chooses `k` centroids among the embeddings and assembles the metric field.
///
/// With a single centroid the nearest-neighbour rule is undefined and `rho`
/// falls back to 1.
pub fn build_metric_field(embeddings: &EmbeddingSet, k: usize, lambda: f64, tau: f64, seed: u64) -> Result<MetricField> {
    embeddings.validate()?;
    let chosen = select_centroids(embeddings, k, seed)?;
    let centroids = chosen
        .iter()
        .map(|&i| {
            let r = &embeddings.records[i];
            Centroid::from_log_var(r.mu.clone(), &r.log_var)
        })
        .collect::<Result<Vec<_>>>()?;
    let rho = if centroids.len() < 2 {
        log::warn!("a single centroid leaves rho undefined; using rho = 1");
        1.0
    } else {
        let mus: Vec<Vec<f64>> = centroids.iter().map(|c| c.mu().to_vec()).collect();
        compute_rho(&mus)?
    };
    if !(rho > 0.0) {
        return Err(Error::invalid("rho", "every selected centroid coincides with another one"));
    }
    MetricField::new(embeddings.dim, centroids, lambda, tau, rho)
}
