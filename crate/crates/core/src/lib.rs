//! Polynomial hierarchical variational autoencoder (PH-VAE).
//!
//! A self-contained implementation of a VAE variant that feeds elementwise
//! powers of the normalized input (`x`, `x^2`, ..., `x^S`) into `S` parallel
//! encoder branches, fuses the branch posteriors into one latent draw, and
//! decodes through a single shared decoder. The training objective replaces
//! the usual KL term with the mean of the per-branch KL divergences.
//!
//! The crate is organized bottom-up:
//!
//! - [`autodiff`]: a small reverse-mode tape over dense tensors.
//! - [`data`]: normalization, polynomial expansion, batching, synthetic
//!   generators, and IDX image ingestion.
//! - [`model`]: the branch encoders, latent fusion, and shared decoder.
//! - [`loss`]: per-branch KL, the polynomial hierarchical divergence,
//!   reconstruction loss, and the mutual-information split.
//! - [`train`]: Adam loop with seeded determinism and epoch logging.
//! - [`metrics`]: histogram densities and model comparison grids.
//! - [`snapshot`] / [`report`] / [`config`]: on-disk formats.
//!
//! All numeric kernels are generic over the scalar type via [`scalar::Scalar`]
//! (implemented for `f32` and `f64`). Experiments run in double precision;
//! the aliases below pin the concrete types used throughout the CLI and the
//! acceptance suite.

pub mod autodiff;
pub mod config;
pub mod data;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod snapshot;
pub mod train;

pub use error::{Error, Result};

/// Double-precision tape, the default for all experiments.
pub type Tape64 = autodiff::Tape<f64>;
/// Single-precision tape.
pub type Tape32 = autodiff::Tape<f32>;
/// Double-precision parameter set.
pub type PhVaeParams64 = model::PhVaeParams<f64>;
/// Double-precision latent statistics.
pub type GaussianLatentStats64 = model::GaussianLatentStats<f64>;
