//! Bayesian distributed lag interaction model with a weighted modifier index.
//!
//! The exposure effect at lag `t` for individual `i` is `beta_t(m*_i)`, a
//! smooth surface over lag and a scalar index `m*_i = m_i' rho` built from
//! several modifiers with simplex weights `rho`. The surface is a tensor product
//! of natural cubic splines; the weights get a Dirichlet (optionally
//! spike-and-slab) prior and are sampled by Metropolis-within-Gibbs.

pub mod cli;
pub mod design;
pub mod error;
pub mod metrics;
pub mod posterior;
pub mod priors;
pub mod sampler;
pub mod simulation;
pub mod spline;
pub mod stats;

pub use design::{CohortData, CrossBasis, Family, IndexWeights};
pub use error::{DlimError, Result};
pub use priors::PriorConfig;
pub use sampler::{run_chain, run_multichain, PosteriorDraws, SamplerConfig};
