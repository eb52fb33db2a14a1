use nalgebra::{DMatrix, DVector};

use super::chain::{ChainState, SamplerConfig};
use super::mh::Proposal;
use crate::linalg::PivotedCholesky;
use crate::model::Path;
use crate::rng::{std_normal_vec, SimRng};
use crate::{lit, Error, Real, Result};

/// Relative pivot cutoff for factoring the noise covariance.
const NOISE_PSD_TOL: f64 = 1e-10;

/// Preconditioned theta chain
/// `x* = [(1 - (1 - theta) dt) x + dt M + sqrt(2 dt) eta] / (1 + theta dt)`,
/// `eta ~ N(0, C)`.
///
/// Coordinates where `C` has no variance (Dirichlet nodes) are pinned to `M`.
#[derive(Debug, Clone)]
pub struct PrecondSampler<T: Real> {
    mean: Path<T>,
    factor: PivotedCholesky<T>,
    pinned: Vec<bool>,
    a: T,
    b: T,
    noise_scale: T,
}

impl<T: Real> PrecondSampler<T> {
    pub fn new(cov: &DMatrix<T>, mean: &Path<T>, cfg: &SamplerConfig) -> Result<Self> {
        cfg.validate()?;
        let n = mean.as_vector().len();
        if cov.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                context: "noise covariance vs mean path",
                expected: n,
                got: cov.nrows(),
            });
        }
        let factor = PivotedCholesky::new(cov, NOISE_PSD_TOL)?;
        let scale = (0..n).fold(T::zero(), |m, i| m.max(cov[(i, i)]));
        let cutoff = scale * lit(NOISE_PSD_TOL);
        let pinned = (0..n).map(|i| cov[(i, i)] <= cutoff).collect();
        let (a, b, noise_scale) = precond_coefficients(cfg.theta, cfg.dt);
        Ok(Self {
            mean: mean.clone(),
            factor,
            pinned,
            a: lit(a),
            b: lit(b),
            noise_scale: lit(noise_scale),
        })
    }

    pub fn noise_dim(&self) -> usize {
        self.factor.rank()
    }

    /// One step driven by a standard normal vector of length [`Self::noise_dim`].
    pub fn step_with(&self, x: &DVector<T>, z: &DVector<T>) -> DVector<T> {
        let eta = self.factor.apply(z);
        let m = self.mean.as_vector();
        let mut out = x * self.a + m * self.b + eta * self.noise_scale;
        for (i, &p) in self.pinned.iter().enumerate() {
            if p {
                out[i] = m[i];
            }
        }
        out
    }

    pub fn step(&self, state: &mut ChainState<T>) {
        let z = std_normal_vec(&mut state.rng, self.noise_dim());
        let next = self.step_with(state.current.as_vector(), &z);
        *state.current.as_vector_mut() = next;
    }
}

impl<T: Real> Proposal<T> for PrecondSampler<T> {
    fn propose(&self, x: &DVector<T>, rng: &mut SimRng) -> DVector<T> {
        let z = std_normal_vec(rng, self.noise_dim());
        self.step_with(x, &z)
    }

    fn log_transition(&self, from: &DVector<T>, to: &DVector<T>) -> T {
        let mut r = (to - from * self.a - self.mean.as_vector() * self.b) / self.noise_scale;
        for (i, &p) in self.pinned.iter().enumerate() {
            if p {
                r[i] = T::zero();
            }
        }
        let w = self.factor.solve_vec(&r);
        -r.dot(&w) / lit(2.0)
    }
}

/// `(a, b, s)` with `x* = a x + b M + s eta`.
fn precond_coefficients(theta: f64, dt: f64) -> (f64, f64, f64) {
    let d = 1.0 + theta * dt;
    ((1.0 - (1.0 - theta) * dt) / d, dt / d, (2.0 * dt).sqrt() / d)
}

/// `(a, b^2)` of the per-mode recursion `c* = a c + b eta`, `eta ~ N(0, lambda)`.
pub fn precond_ar1(theta: f64, dt: f64) -> (f64, f64) {
    let (a, _, s) = precond_coefficients(theta, dt);
    (a, s * s)
}

/// Stationary variance of a KL mode with eigenvalue `lambda`, from the
/// fixed point `s = a^2 s + b^2 lambda`.
pub fn precond_mode_variance(lambda: f64, theta: f64, dt: f64) -> f64 {
    let (a, b2) = precond_ar1(theta, dt);
    b2 * lambda / (1.0 - a * a)
}

/// One preconditioned step without a cached factorization.
pub fn precond_step<T: Real>(
    cov: &DMatrix<T>,
    mean: &Path<T>,
    state: &mut ChainState<T>,
    cfg: &SamplerConfig,
) -> Result<()> {
    PrecondSampler::new(cov, mean, cfg)?.step(state);
    state.finish_step(cfg);
    Ok(())
}
