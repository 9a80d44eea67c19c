//! Gaussian-binary restricted Boltzmann machines (GRBMs).
//!
//! A GRBM couples real-valued visible units `x` (isotropic Gaussian noise with
//! a shared standard deviation `σ`) to binary hidden units `h` through the
//! energy
//!
//! ```text
//! E(x, h) = ||x - b||² / (2σ²) - cᵀh - xᵀWh / σ²
//! ```
//!
//! Its visible marginal is a constrained mixture of `2^N` isotropic Gaussians
//! centred at `b + Wh`, which for small `N` lets every density quantity be
//! computed exactly. The crate is organised as:
//!
//! - [`model`]: parameters, energy, conditionals and Gibbs sampling.
//! - [`exact`]: exact partition function, marginals, product-of-experts and
//!   mixture views, and the exact log-likelihood gradient.
//! - [`training`]: CD-k, PCD-k and parallel-tempering trainers with the
//!   initialisation, momentum and column-norm recipes.
//! - [`estimators`]: annealed importance sampling of `ln Z`.
//! - [`data`]: synthetic blind-source-separation data, whitening, image
//!   patches, splitting and persistence.
//! - [`baselines`]: FastICA, isotropic Gaussian and MoG fits, closed-form
//!   likelihoods and the Amari error.
//! - [`experiment`]: the blind-source-separation study and the sampler
//!   comparison used by the CLI.

pub mod baselines;
pub mod data;
pub mod error;
pub mod estimators;
pub mod exact;
pub mod experiment;
pub mod math;
pub mod model;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
pub use exact::{ExactDensity, ExpertEval, MixtureComponent, MixtureView};
pub use model::{DataBatch, GradientSet, GrbmParams};
pub use rng::ChainRng;
pub use training::{Method, TrainConfig, Trainer};
