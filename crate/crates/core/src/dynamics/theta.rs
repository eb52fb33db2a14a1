use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::chain::{ChainState, SamplerConfig};
use super::mh::Proposal;
use crate::linalg::{symmetrize, BlockTridiagonal, BlockTridiagonalLu};
use crate::model::Path;
use crate::operator::DiscreteOperator;
use crate::rng::{std_normal_vec, SimRng};
use crate::{lit, Error, Real, Result};

/// Theta-method chain for `dx = L (x - M) dt + sqrt(2) dW` on the free nodes.
///
/// In deviation coordinates `y = x - M` one step solves
/// `(I - theta dt L) y* = (I + (1 - theta) dt L) y + sqrt(2 dt) xi`,
/// `xi ~ N(0, I / h)`. The implicit matrix is factored once.
#[derive(Debug, Clone)]
pub struct ThetaSampler<T: Real> {
    mean: Path<T>,
    offset: usize,
    n_free: usize,
    explicit: BlockTridiagonal<T>,
    implicit: BlockTridiagonal<T>,
    lu: BlockTridiagonalLu<T>,
    noise_scale: T,
    noise_prec: T,
}

impl<T: Real> ThetaSampler<T> {
    pub fn new(op: &DiscreteOperator<T>, mean: &Path<T>, cfg: &SamplerConfig) -> Result<Self> {
        cfg.validate()?;
        if mean.grid() != op.grid() || mean.dim() != op.block_dim() {
            return Err(Error::GridMismatch("mean path and operator grids differ".into()));
        }
        let (s, _) = op.free_range();
        let free = op.free_block();
        let theta: T = lit(cfg.theta);
        let dt: T = lit(cfg.dt);
        let h: T = op.grid().spacing();
        let implicit = free.scale_shift(-theta * dt, T::one());
        let explicit = free.scale_shift((T::one() - theta) * dt, T::one());
        let lu = implicit.factor()?;
        let two: T = lit(2.0);
        Ok(Self {
            mean: mean.clone(),
            offset: s * op.block_dim(),
            n_free: free.dim(),
            explicit,
            implicit,
            lu,
            noise_scale: (two * dt / h).sqrt(),
            noise_prec: h / (two * dt),
        })
    }

    fn deviation(&self, x: &DVector<T>) -> DVector<T> {
        x.rows(self.offset, self.n_free) - self.mean.as_vector().rows(self.offset, self.n_free)
    }

    fn embed(&self, y: &DVector<T>) -> DVector<T> {
        let mut out = self.mean.as_vector().clone();
        let mut free = out.rows_mut(self.offset, self.n_free);
        free += y;
        out
    }

    /// One step driven by the given standard normal vector on the free
    /// coordinates (length [`Self::noise_dim`]).
    pub fn step_with(&self, x: &DVector<T>, z: &DVector<T>) -> DVector<T> {
        let y = self.deviation(x);
        let rhs = self.explicit.mul_vec(&y) + z * self.noise_scale;
        self.embed(&self.lu.solve(&rhs))
    }

    pub fn noise_dim(&self) -> usize {
        self.n_free
    }

    pub fn step(&self, state: &mut ChainState<T>) {
        let z = std_normal_vec(&mut state.rng, self.n_free);
        let next = self.step_with(state.current.as_vector(), &z);
        *state.current.as_vector_mut() = next;
    }
}

impl<T: Real> Proposal<T> for ThetaSampler<T> {
    fn propose(&self, x: &DVector<T>, rng: &mut SimRng) -> DVector<T> {
        let z = std_normal_vec(rng, self.n_free);
        self.step_with(x, &z)
    }

    fn log_transition(&self, from: &DVector<T>, to: &DVector<T>) -> T {
        let r = self.implicit.mul_vec(&self.deviation(to)) - self.explicit.mul_vec(&self.deviation(from));
        -r.norm_squared() * self.noise_prec / lit(2.0)
    }
}

/// One theta-method step without a cached factorization. Loops should
/// build a [`ThetaSampler`] once instead.
pub fn theta_step<T: Real>(
    op: &DiscreteOperator<T>,
    mean: &Path<T>,
    state: &mut ChainState<T>,
    cfg: &SamplerConfig,
) -> Result<()> {
    ThetaSampler::new(op, mean, cfg)?.step(state);
    state.finish_step(cfg);
    Ok(())
}

/// One-step contraction of a mode of `-L` with eigenvalue `mu`.
pub fn theta_mode_factor(mu: f64, theta: f64, dt: f64) -> f64 {
    (1.0 - (1.0 - theta) * dt * mu) / (1.0 + theta * dt * mu)
}

/// Stationary variance of the coefficient of a unit-norm (Euclidean)
/// eigenvector of `-L` with eigenvalue `mu`: `1 / (h mu (1 + (theta - 1/2) dt mu))`.
pub fn theta_mode_variance(mu: f64, h: f64, theta: f64, dt: f64) -> f64 {
    1.0 / (h * mu * (1.0 + (theta - 0.5) * dt * mu))
}

/// Stationary covariance of the theta chain on the full grid (zero on
/// Dirichlet nodes). Tends to `(-h L)^{-1}` as `dt -> 0`.
pub fn theta_stationary_covariance<T: Real>(op: &DiscreteOperator<T>, cfg: &SamplerConfig) -> Result<DMatrix<T>> {
    cfg.validate()?;
    let h = crate::to_f64(op.grid().spacing::<T>());
    let neg = symmetrize(&-op.free_block().to_dense());
    let eig = SymmetricEigen::new(neg);
    let mut scaled = eig.eigenvectors.clone();
    for (k, &mu) in eig.eigenvalues.iter().enumerate() {
        let mu = crate::to_f64(mu);
        if mu <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!("-L has eigenvalue {mu}")));
        }
        let s: T = lit(theta_mode_variance(mu, h, cfg.theta, cfg.dt));
        scaled.column_mut(k).scale_mut(s);
    }
    let inner = scaled * eig.eigenvectors.transpose();
    let d = op.block_dim();
    let (s, e) = op.free_range();
    let n = op.grid().n_nodes() * d;
    let mut out = DMatrix::zeros(n, n);
    out.view_mut((s * d, s * d), ((e - s) * d, (e - s) * d)).copy_from(&symmetrize(&inner));
    Ok(out)
}
