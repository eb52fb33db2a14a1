use nalgebra::{DMatrix, DVector};

use super::chain::ChainState;
use crate::linalg::{BlockTridiagonal, PivotedCholesky};
use crate::model::Path;
use crate::operator::DiscreteOperator;
use crate::rng::{uniform, SimRng};
use crate::{lit, Error, Real, Result};

/// Markov proposal with a tractable Gaussian transition density.
pub trait Proposal<T: Real> {
    fn propose(&self, x: &DVector<T>, rng: &mut SimRng) -> DVector<T>;
    /// `log q(to | from)` up to an additive constant independent of both.
    fn log_transition(&self, from: &DVector<T>, to: &DVector<T>) -> T;
}

/// Discretized target density `-1/2 <x - M, C^{-1}(x - M)>`.
#[derive(Debug, Clone)]
pub struct GaussianTarget<T: Real> {
    mean: DVector<T>,
    precision: TargetPrecision<T>,
}

#[derive(Debug, Clone)]
enum TargetPrecision<T: Real> {
    /// `-h L` on the free nodes starting at `offset`.
    Operator { offset: usize, precision: BlockTridiagonal<T> },
    /// Generalized inverse of a dense covariance.
    Dense(PivotedCholesky<T>),
}

impl<T: Real> GaussianTarget<T> {
    /// Target `-h/2 <x - M, (-L)(x - M)>` over the free nodes of `op`.
    pub fn new(op: &DiscreteOperator<T>, mean: &Path<T>) -> Result<Self> {
        if mean.grid() != op.grid() || mean.dim() != op.block_dim() {
            return Err(Error::GridMismatch("mean path and operator grids differ".into()));
        }
        Ok(Self {
            mean: mean.as_vector().clone(),
            precision: TargetPrecision::Operator {
                offset: op.free_range().0 * op.block_dim(),
                precision: op.precision(),
            },
        })
    }

    /// Target `N(M, C)` for a possibly rank-deficient `C`; directions without
    /// variance do not contribute.
    pub fn from_covariance(cov: &DMatrix<T>, mean: &Path<T>) -> Result<Self> {
        let n = mean.as_vector().len();
        if cov.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                context: "target covariance vs mean path",
                expected: n,
                got: cov.nrows(),
            });
        }
        Ok(Self {
            mean: mean.as_vector().clone(),
            precision: TargetPrecision::Dense(PivotedCholesky::new(cov, TARGET_PSD_TOL)?),
        })
    }

    pub fn log_density(&self, x: &DVector<T>) -> T {
        match &self.precision {
            TargetPrecision::Operator { offset, precision } => {
                let n = precision.dim();
                let y = x.rows(*offset, n) - self.mean.rows(*offset, n);
                -y.dot(&precision.mul_vec(&y)) / lit(2.0)
            }
            TargetPrecision::Dense(factor) => {
                let y = x - &self.mean;
                -y.dot(&factor.solve_vec(&y)) / lit(2.0)
            }
        }
    }
}

const TARGET_PSD_TOL: f64 = 1e-10;

/// One Metropolis-Hastings step. Returns the acceptance probability
/// `min(1, pi(x*) q(x | x*) / (pi(x) q(x* | x)))` of the proposal drawn.
pub fn mh_adjust<T, P, F>(proposal: &P, log_target: F, state: &mut ChainState<T>) -> T
where
    T: Real,
    P: Proposal<T>,
    F: Fn(&DVector<T>) -> T,
{
    let x = state.current.as_vector().clone();
    let y = proposal.propose(&x, &mut state.rng);
    let log_ratio = log_target(&y) - log_target(&x) + proposal.log_transition(&y, &x) - proposal.log_transition(&x, &y);
    let alpha = if log_ratio >= T::zero() { T::one() } else { log_ratio.exp() };
    let u: T = uniform(&mut state.rng);
    state.proposed += 1;
    if u < alpha {
        state.accepted += 1;
        *state.current.as_vector_mut() = y;
    }
    alpha
}
