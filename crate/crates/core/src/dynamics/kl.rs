use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::kernels::GaussKernel;
use crate::linalg::symmetrize;
use crate::model::{Grid, Path};
use crate::rng::{std_normal_vec, substream, SimRng};
use crate::{lit, Error, Real, Result};

/// Modes with `lambda_n <= KL_TRUNCATION * lambda_1` are dropped.
pub const KL_TRUNCATION: f64 = 1e-12;

/// Eigenpairs of the covariance operator on the grid,
/// `(C_h f)_i = h sum_j C(u_i, u_j) f_j`, with eigenvectors orthonormal in
/// `<f, g> = h sum_j f_j . g_j`. Coordinates with zero prior variance are
/// excluded from the decomposition and reproduce the mean exactly.
#[derive(Debug, Clone)]
pub struct KlBasis<T: Real> {
    grid: Grid,
    dim: usize,
    mean: DVector<T>,
    /// Descending.
    pub eigenvalues: Vec<T>,
    /// One column per mode over all grid coordinates.
    pub eigenvectors: DMatrix<T>,
}

impl<T: Real> KlBasis<T> {
    pub fn from_kernel(kernel: &GaussKernel<T>, grid: Grid) -> Result<Self> {
        Self::from_covariance(&kernel.gram(grid), &kernel.mean_path(grid))
    }

    /// `cov` is the node covariance matrix (Gram matrix) matching `mean`.
    pub fn from_covariance(cov: &DMatrix<T>, mean: &Path<T>) -> Result<Self> {
        let n = mean.as_vector().len();
        if cov.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                context: "covariance vs mean path",
                expected: n,
                got: cov.nrows(),
            });
        }
        let grid = mean.grid();
        let h: T = grid.spacing();
        let scale = (0..n).fold(T::zero(), |m, i| m.max(cov[(i, i)]));
        if let Some(i) = (0..n).find(|&i| cov[(i, i)] < -scale * lit(crate::linalg::PSD_TOL)) {
            return Err(Error::NotPositiveDefinite(format!("negative variance at coordinate {i}")));
        }
        let active: Vec<usize> = (0..n).filter(|&i| cov[(i, i)] > scale * lit(KL_TRUNCATION)).collect();
        let sub = DMatrix::from_fn(active.len(), active.len(), |a, b| cov[(active[a], active[b])] * h);
        let eig = SymmetricEigen::new(symmetrize(&sub));
        let mut order: Vec<usize> = (0..active.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).expect("finite eigenvalues"));
        let lambda1 = order.first().map_or(T::zero(), |&k| eig.eigenvalues[k]);
        let lambda_min = order.last().map_or(T::zero(), |&k| eig.eigenvalues[k]);
        if lambda_min < -lambda1 * lit(crate::linalg::PSD_TOL) {
            return Err(Error::NotPositiveDefinite(format!(
                "covariance has eigenvalue {lambda_min} against largest {lambda1}"
            )));
        }
        let keep: Vec<usize> = order
            .into_iter()
            .filter(|&k| eig.eigenvalues[k] > lambda1 * lit(KL_TRUNCATION))
            .collect();
        let inv_sqrt_h = T::one() / h.sqrt();
        let mut vecs = DMatrix::zeros(n, keep.len());
        for (col, &k) in keep.iter().enumerate() {
            for (a, &i) in active.iter().enumerate() {
                vecs[(i, col)] = eig.eigenvectors[(a, k)] * inv_sqrt_h;
            }
        }
        Ok(Self {
            grid,
            dim: mean.dim(),
            mean: mean.as_vector().clone(),
            eigenvalues: keep.iter().map(|&k| eig.eigenvalues[k]).collect(),
            eigenvectors: vecs,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `M + sum_n alpha_n sqrt(lambda_n) phi_n`.
    pub fn synthesize(&self, alpha: &DVector<T>) -> Path<T> {
        let scaled = DVector::from_fn(self.n_modes(), |k, _| alpha[k] * self.eigenvalues[k].sqrt());
        let x = &self.mean + &self.eigenvectors * scaled;
        Path::new(self.grid, self.dim, x).expect("basis and mean share the grid")
    }

    pub fn sample(&self, rng: &mut SimRng) -> Path<T> {
        let alpha = std_normal_vec(rng, self.n_modes());
        self.synthesize(&alpha)
    }

    /// `alpha_n = <x - M, phi_n> / sqrt(lambda_n)`.
    pub fn project(&self, x: &Path<T>) -> DVector<T> {
        let h: T = self.grid.spacing();
        let dev = x.as_vector() - &self.mean;
        let mut c = self.eigenvectors.tr_mul(&dev) * h;
        for (k, l) in self.eigenvalues.iter().enumerate() {
            c[k] /= l.sqrt();
        }
        c
    }

    /// `max |<phi_m, phi_n> - delta_mn|`.
    pub fn orthonormality_error(&self) -> T {
        let h: T = self.grid.spacing();
        let g = self.eigenvectors.tr_mul(&self.eigenvectors) * h;
        (g - DMatrix::identity(self.n_modes(), self.n_modes())).amax()
    }

    /// `max_n |C_h phi_n - lambda_n phi_n|` against the given node covariance.
    pub fn eigen_residual(&self, cov: &DMatrix<T>) -> T {
        let h: T = self.grid.spacing();
        let cp = cov * &self.eigenvectors * h;
        let mut worst = T::zero();
        for (k, &l) in self.eigenvalues.iter().enumerate() {
            let r = cp.column(k) - self.eigenvectors.column(k) * l;
            worst = worst.max(r.amax());
        }
        worst
    }
}

/// `n` independent draws of the discretized measure; draw `i` uses stream
/// `i` of `seed`.
pub fn kl_sampler<T: Real>(kernel: &GaussKernel<T>, grid: Grid, n: usize, seed: u64) -> Result<Vec<Path<T>>> {
    if n == 0 {
        return Err(Error::invalid("n", "need at least one sample"));
    }
    let basis = KlBasis::from_kernel(kernel, grid)?;
    Ok((0..n).map(|i| basis.sample(&mut substream(seed, i as u64))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{empirical_stats, kernel_bridge, kernel_fixed_left};
    use crate::model::LinearSdeModel;
    use crate::rng::seeded;

    fn ou2() -> LinearSdeModel<f64> {
        LinearSdeModel::new(
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.4, 0.0, -0.5]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.3, 0.8]),
        )
        .unwrap()
    }

    #[test]
    fn basis_is_orthonormal_eigenbasis() {
        let k = kernel_fixed_left(&ou2(), &DVector::from_row_slice(&[1.0, 0.0])).unwrap();
        let grid = Grid::new(33).unwrap();
        let basis = KlBasis::from_kernel(&k, grid).unwrap();
        let c = k.gram(grid);
        assert!(basis.orthonormality_error() <= 1e-8);
        assert!(basis.eigen_residual(&c) <= 1e-8 * basis.eigenvalues[0]);
        assert!(basis.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(basis.n_modes(), 64);
    }

    #[test]
    fn bridge_draws_hit_endpoints_exactly() {
        let model = LinearSdeModel::new(DMatrix::zeros(1, 1), DMatrix::identity(1, 1)).unwrap();
        let k = kernel_bridge(&model, &DVector::from_element(1, -1.0), &DVector::from_element(1, 2.0)).unwrap();
        let paths = kl_sampler(&k, Grid::new(17).unwrap(), 20, 3).unwrap();
        for p in &paths {
            assert_eq!(p.get(0, 0), -1.0);
            assert_eq!(p.get(16, 0), 2.0);
        }
    }

    #[test]
    fn coefficients_are_standard_normal() {
        let model = LinearSdeModel::new(DMatrix::zeros(1, 1), DMatrix::identity(1, 1)).unwrap();
        let k = kernel_fixed_left(&model, &DVector::zeros(1)).unwrap();
        let grid = Grid::new(17).unwrap();
        let basis = KlBasis::from_kernel(&k, grid).unwrap();
        let n = 20_000;
        let mut rng = seeded(9);
        let mut sums = DVector::<f64>::zeros(basis.n_modes());
        for _ in 0..n {
            let a = basis.project(&basis.sample(&mut rng));
            sums += a.component_mul(&a);
        }
        for s in sums.iter() {
            assert!((s / n as f64 - 1.0).abs() <= 3.0 * (2.0f64).sqrt() / (n as f64).sqrt());
        }
    }

    #[test]
    fn empirical_covariance_matches_gram() {
        let k = kernel_fixed_left(&ou2(), &DVector::from_row_slice(&[0.5, -0.5])).unwrap();
        let grid = Grid::new(9).unwrap();
        let paths = kl_sampler(&k, grid, 20_000, 17).unwrap();
        let pairs: Vec<(usize, usize)> = vec![(2, 8), (4, 4), (8, 8), (3, 6)];
        let st = empirical_stats(&paths, &pairs).unwrap();
        let c = k.gram(grid);
        for p in &st.pairs {
            let (i, j) = p.nodes;
            for a in 0..2 {
                for b in 0..2 {
                    let exact = c[(i * 2 + a, j * 2 + b)];
                    assert!((p.cov[(a, b)] - exact).abs() <= 5.0 * p.stderr[(a, b)], "{i} {j}");
                }
            }
        }
    }

    #[test]
    fn rejects_indefinite() {
        let c = DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, -0.5, 1.0]));
        let m = Path::zeros(Grid::new(3).unwrap(), 1);
        assert!(matches!(KlBasis::from_covariance(&c, &m), Err(Error::NotPositiveDefinite(_))));
    }
}
