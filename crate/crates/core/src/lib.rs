//! Bayesian nonparametric clustering of set-valued data.
//!
//! Each observation is a point pattern (a finite, unordered set of points)
//! modelled as a Poisson random finite set. A Dirichlet process mixture
//! over such sets is fitted by collapsed Gibbs sampling, with the rate and
//! Gaussian feature parameters integrated out through a Gamma ×
//! Normal-Inverse-Wishart conjugate prior.

pub mod baselines;
pub mod conjugate;
pub mod error;
pub mod eval;
mod linalg;
pub mod rfs;
pub mod sampler;
pub mod synth;

pub use conjugate::{GammaParams, NiwParams, RfsPrior, SetSufficientStats};
pub use error::{Error, Result};
pub use rfs::{GaussianParams, PointPattern, PoissonRfsParams};
pub use sampler::{ChainConfig, ChainTrace, GibbsState, Hyperparams, PosteriorSummary};
