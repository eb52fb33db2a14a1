//! Sampling conditioned linear SDE paths through Langevin SPDEs.
//!
//! The target path measures are the laws of `dX = AX du + B dW` on `[0, 1]`
//! under four kinds of conditioning: a fixed left end point, a Gaussian left
//! end point, a bridge, and a Kalman-Bucy observation path. Each target is
//! Gaussian with covariance operator `C = (-L)^{-1}`, where `L` is a second
//! order differential operator with conditioning-dependent boundary rows.
//!
//! * [`model`] holds the SDE and conditioning types plus the matrix primitives.
//! * [`kernels`] evaluates the analytic means and covariance kernels.
//! * [`operator`] discretizes `L` on a uniform grid and solves the mean BVP.
//! * [`dynamics`] time-steps the discretized SPDE (theta-method, preconditioned
//!   chain, Karhunen-Loeve sampler, Metropolis-Hastings).
//! * [`kalman`] is the classical Riccati / filter / smoother sweep.
//! * [`oracle`] is Gaussian conditioning by Schur complement on the grid.
//! * [`io`] reads and writes grid functions as CSV.
//!
//! All numerics are generic over [`Real`]; `f64` aliases live at the crate root.

pub mod dynamics;
pub mod error;
pub mod io;
pub mod kalman;
pub mod kernels;
pub mod linalg;
pub mod model;
pub mod operator;
pub mod oracle;
pub mod rng;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

pub use error::{Error, Result};

/// Scalar type the numerics are generic over (`f32` or `f64`).
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {}

impl<T> Real for T where T: RealField + Copy + FromPrimitive + ToPrimitive {}

/// Lossy conversion of an `f64` literal into the working scalar.
#[inline]
pub(crate) fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

/// Widening conversion of a working scalar to `f64`.
#[inline]
pub(crate) fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

pub use dynamics::{ChainState, KlBasis, SamplerConfig};
pub use kernels::GaussKernel;
pub use model::{Conditioning, Grid, LinearSdeModel, ObservationModel, Path};
pub use operator::DiscreteOperator;
pub use oracle::JointGaussian;

pub type LinearSdeModel64 = LinearSdeModel<f64>;
pub type ObservationModel64 = ObservationModel<f64>;
pub type Conditioning64 = Conditioning<f64>;
pub type Path64 = Path<f64>;
pub type GaussKernel64 = GaussKernel<f64>;
pub type DiscreteOperator64 = DiscreteOperator<f64>;
pub type ChainState64 = ChainState<f64>;
pub type KlBasis64 = KlBasis<f64>;
pub type JointGaussian64 = JointGaussian<f64>;

pub type LinearSdeModel32 = LinearSdeModel<f32>;
pub type Path32 = Path<f32>;
pub type GaussKernel32 = GaussKernel<f32>;
