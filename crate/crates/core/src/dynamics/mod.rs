//! Time-stepping samplers for the discretized Langevin SPDE.
//!
//! * [`ThetaSampler`]: theta-method in time for `dx = L x dt - L M dt + sqrt(2) dW`.
//! * [`PrecondSampler`]: the preconditioned chain `dx = (M - x) dt + sqrt(2 C) dW`.
//! * [`KlBasis`]: exact i.i.d. draws from the eigenbasis of the Gram matrix.
//! * [`mh_adjust`]: Metropolis-Hastings correction around either proposal.
//!
//! Space-time white noise on a grid of spacing `h` has covariance `I / h`
//! per node so that `<xi, f>` has variance `|f|^2` in the `h`-weighted inner
//! product. Dirichlet nodes never receive noise.

mod chain;
mod kl;
mod mh;
mod observation;
mod precond;
mod theta;

pub use chain::{run_chain, ChainState, RunningStats, SamplerConfig};
pub use kl::{kl_sampler, KlBasis, KL_TRUNCATION};
pub use mh::{mh_adjust, GaussianTarget, Proposal};
pub use observation::drift_from_observation;
pub use precond::{precond_ar1, precond_mode_variance, precond_step, PrecondSampler};
pub use theta::{theta_mode_factor, theta_mode_variance, theta_stationary_covariance, theta_step, ThetaSampler};
