//! Riemannian geometry of VAE latent spaces.
//!
//! The crate turns the posterior statistics of a variational autoencoder
//! (means and diagonal covariances) into a smooth, closed-form Riemannian
//! metric on the latent space, and builds on it:
//!
//! - [`geometry`]: the metric field, its log-determinant and gradient, volume
//!   element, Mahalanobis distances and grid-normalized uniform densities.
//! - [`hmc`]: Hamiltonian Monte Carlo sampling from the Riemannian uniform
//!   distribution `p(z) ∝ sqrt(det G(z))`.
//! - [`paths`]: affine, potential-minimizing and geodesic interpolation.
//! - [`centroids`]: k-medoids centroid selection and metric assembly.
//! - [`vae`]: a toy disks-and-rings dataset and a small MLP VAE trained with
//!   hand-written backpropagation.
//! - [`persistence`]: JSON, CSV and PGM file formats for every artifact.
//!
//! ```
//! use riemann_latent::geometry::{Centroid, DiagSpd, MetricField};
//!
//! let well = Centroid::new(vec![0.0, 0.0], DiagSpd::new(vec![4.0, 1.0])?)?;
//! let field = MetricField::new(2, vec![well], 0.01, 0.0, 1.0)?;
//! let g = field.metric_at(&[0.0, 0.0])?;
//! assert!((g.entries()[0] - 4.01).abs() < 1e-12);
//! # Ok::<(), riemann_latent::Error>(())
//! ```

pub mod centroids;
pub mod error;
pub mod geometry;
pub mod hmc;
pub mod paths;
pub mod persistence;
pub mod rng;
pub mod vae;

pub use error::{Error, Result};
pub use geometry::{Centroid, DiagSpd, MetricField};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/metric.md")]
    mod metric {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/paths.md")]
    mod paths {}
    #[doc = include_str!("../../../book/src/centroids.md")]
    mod centroids {}
    #[doc = include_str!("../../../book/src/toy-vae.md")]
    mod toy_vae {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
