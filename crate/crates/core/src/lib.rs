//! Poisson-process radial basis function networks.
//!
//! A single-hidden-layer RBF network whose hidden-unit centers carry a
//! Poisson process prior. Each unit's squared inverse width is tied to the
//! intensity at its center, `s_k^2 = s0^2 * lambda(c_k)^2`, which decouples
//! the prior amplitude variance from the lengthscale.
//!
//! The crate covers prior sampling ([`intensity`]), analytic and Monte
//! Carlo prior covariances ([`kernel`]), posterior inference with HMC,
//! birth/death moves and a sigmoidal Gaussian Cox process over the
//! intensity ([`mcmc`], [`sgcp`]), and the evaluation metrics used to
//! compare against a standard BNN ([`evaluation`]).

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod gp;
pub mod hmc;
pub mod intensity;
pub mod kernel;
pub mod mcmc;
pub mod network;
pub mod posterior;
pub mod sgcp;
pub mod stats;

pub use dataset::{Dataset, Normalization, Split};
pub use error::{Error, Result};
pub use gp::GpHyper;
pub use intensity::{IntensityKind, IntensityModel, PiecewiseLinearFn};
pub use network::{Hyperparams, NetworkState, Region};

/// Deterministic random stream used throughout the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Build the random stream for `seed`, optionally split into an
/// independent sub-stream (chains, Monte Carlo shards).
pub fn rng_from_seed(seed: u64, stream: u64) -> Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
