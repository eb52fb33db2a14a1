//! Gaussian conditioning by Schur complement on the grid.
//!
//! For `(X1, X2)` jointly Gaussian, `X1 | X2 = x2` has mean
//! `m1 + C12 C22^+ (x2 - m2)` and covariance `C11 - C12 C22^+ C21`. `C22^+`
//! is a generalized inverse built from a pivoted Cholesky factorization that
//! stops once the remaining pivots fall below a relative cutoff.

use nalgebra::{DMatrix, DVector};

use crate::kernels::kernel_gaussian_left;
use crate::linalg::{asymmetry, symmetrize, PivotedCholesky};
use crate::model::{Grid, ObservationModel, Path};
use crate::{lit, Error, Real, Result};

/// Default relative pivot cutoff for `C22`.
pub const SCHUR_CUTOFF: f64 = 1e-10;

/// Initial variance given to `Y(0)` by the observation oracle.
pub const OBSERVATION_EPS: f64 = 1e-8;

/// Joint Gaussian with an observed index set (block 2); the remaining
/// indices, in increasing order, form block 1.
#[derive(Debug, Clone)]
pub struct JointGaussian<T: Real> {
    pub mean: DVector<T>,
    pub cov: DMatrix<T>,
    observed: Vec<usize>,
    latent: Vec<usize>,
}

impl<T: Real> JointGaussian<T> {
    pub fn new(mean: DVector<T>, cov: DMatrix<T>, observed: Vec<usize>) -> Result<Self> {
        let n = mean.len();
        if cov.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                context: "joint covariance",
                expected: n,
                got: cov.nrows(),
            });
        }
        let scale = cov.amax().max(T::one());
        if asymmetry(&cov) > scale * lit(1e-10) {
            return Err(Error::invalid("cov", "not symmetric"));
        }
        let mut flag = vec![false; n];
        for &i in &observed {
            if i >= n || flag[i] {
                return Err(Error::invalid("observed", format!("index {i} out of range or repeated")));
            }
            flag[i] = true;
        }
        let latent = (0..n).filter(|&i| !flag[i]).collect();
        Ok(Self { mean, cov, observed, latent })
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn latent(&self) -> &[usize] {
        &self.latent
    }

    fn block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<T> {
        DMatrix::from_fn(rows.len(), cols.len(), |a, b| self.cov[(rows[a], cols[b])])
    }
}

/// Mean and covariance of block 1 given block 2 `= observed`.
pub fn schur_condition<T: Real>(joint: &JointGaussian<T>, observed: &DVector<T>) -> Result<(DVector<T>, DMatrix<T>)> {
    schur_condition_with(joint, observed, SCHUR_CUTOFF)
}

/// [`schur_condition`] with an explicit relative cutoff for `C22^+`.
pub fn schur_condition_with<T: Real>(
    joint: &JointGaussian<T>,
    observed: &DVector<T>,
    cutoff: f64,
) -> Result<(DVector<T>, DMatrix<T>)> {
    let (i1, i2) = (joint.latent(), joint.observed());
    if observed.len() != i2.len() {
        return Err(Error::DimensionMismatch {
            context: "observed values",
            expected: i2.len(),
            got: observed.len(),
        });
    }
    let m1 = DVector::from_fn(i1.len(), |a, _| joint.mean[i1[a]]);
    let c11 = joint.block(i1, i1);
    if i2.is_empty() {
        return Ok((m1, c11));
    }
    let m2 = DVector::from_fn(i2.len(), |a, _| joint.mean[i2[a]]);
    let c22 = joint.block(i2, i2);
    let c21 = joint.block(i2, i1);
    let chol = PivotedCholesky::new(&c22, cutoff)?;
    let resid = observed - m2;
    let alpha = chol.solve_vec(&resid);
    let scale = c22.amax().max(T::one()) * resid.amax().max(T::one());
    let miss = (&c22 * &alpha - &resid).amax();
    if miss > scale * lit(1e-6) {
        return Err(Error::Singular(format!(
            "observation lies outside the support of C22 (miss {miss}, rank {} of {})",
            chol.rank(),
            i2.len()
        )));
    }
    let gain = chol.solve(&c21);
    let mean = m1 + c21.tr_mul(&alpha);
    let cov = symmetrize(&(c11 - c21.tr_mul(&gain)));
    let dscale = cov.amax().max(T::one());
    if let Some(k) = (0..cov.nrows()).find(|&k| cov[(k, k)] < -dscale * lit(crate::linalg::PSD_TOL)) {
        return Err(Error::NotPositiveDefinite(format!("posterior variance {} at {k}", cov[(k, k)])));
    }
    Ok((mean, cov))
}

/// Posterior of the signal nodes given the observation path at every node,
/// by conditioning the stacked `(X, Y)` grid Gaussian. `Y(0)` gets initial
/// variance [`OBSERVATION_EPS`].
pub fn kalman_posterior_oracle<T: Real>(
    obs: &ObservationModel<T>,
    grid: Grid,
    y_path: &Path<T>,
) -> Result<(Path<T>, DMatrix<T>)> {
    kalman_posterior_oracle_eps(obs, grid, y_path, OBSERVATION_EPS)
}

pub fn kalman_posterior_oracle_eps<T: Real>(
    obs: &ObservationModel<T>,
    grid: Grid,
    y_path: &Path<T>,
    eps: f64,
) -> Result<(Path<T>, DMatrix<T>)> {
    obs.validate()?;
    if y_path.grid() != grid || y_path.dim() != obs.dim_y() {
        return Err(Error::GridMismatch("observation path does not match grid or dimension".into()));
    }
    let (m, n) = (obs.dim_x(), obs.dim_y());
    let stacked = obs.stacked_model();
    let mut x0 = DVector::zeros(m + n);
    x0.rows_mut(0, m).copy_from(&obs.x_minus);
    let mut sigma = DMatrix::identity(m + n, m + n) * lit::<T>(eps);
    sigma.view_mut((0, 0), (m, m)).copy_from(&obs.lambda);
    let kernel = kernel_gaussian_left(&stacked, &x0, &sigma)?;
    let joint_mean = kernel.mean_path(grid).into_vector();
    let cov = kernel.gram(grid);
    let observed: Vec<usize> = (0..grid.n_nodes()).flat_map(|j| (0..n).map(move |k| j * (m + n) + m + k)).collect();
    let joint = JointGaussian::new(joint_mean, cov, observed)?;
    let (mean, cov) = schur_condition(&joint, y_path.as_vector())?;
    Ok((Path::new(grid, m, mean)?, cov))
}
