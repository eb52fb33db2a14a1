//! Grid discretization of `L = (d/du + A^*) (BB^*)^{-1} (d/du - A)`.
//!
//! Interior rows apply the factored stencil `(D+ + A^*) Sigma (D- - A)` with
//! `Sigma = (BB^*)^{-1}`, the backward difference paired with `A` at the
//! left node of each interval and the forward difference paired with `A^*` at
//! the right node:
//!
//! ```text
//! f_k       = Sigma ((x_k - x_{k-1}) / h - A x_{k-1})       k = 1..J-1
//! (L x)_j   = (f_{j+1} - f_j) / h + A^* f_{j+1}
//! ```
//!
//! This is `-Q / h` where `Q` is the precision of the Euler-Maruyama path
//! density, so the assembled matrix is exactly symmetric. Boundary rows are
//! the same energy truncated at the ends, i.e. the first-order one-sided
//! conditions `f_1 = Sigma_0^{-1} x_0` (Robin, Gaussian left end) and
//! `f_{J-1} = 0` (Robin, `x' = A x` at `u = 1`), each scaled by `-1/h`.
//! Dirichlet rows are identity rows; the known values enter the right hand
//! side. The leading error of the scheme is `O(h)`.
//!
//! For the observation operator the quadratic term `A21^* Sigma_2 A21` is
//! integrated with lumped trapezoidal weights (`h` at interior nodes, `h/2`
//! at the ends), so interior rows read `L x - A21^* Sigma_2 A21 x` exactly.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::dynamics::drift_from_observation;
use crate::kernels::GaussKernel;
use crate::linalg::{lu_solve, BlockTridiagonal};
use crate::model::{invert_spd, Conditioning, Grid, LinearSdeModel, ObservationModel, Path};
use crate::{lit, Error, Real, Result};

/// Homogeneous boundary condition at one end of `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryRow<T: Real> {
    /// `x = 0`
    Dirichlet,
    /// `x' = K x`
    Robin(DMatrix<T>),
}

impl<T: Real> BoundaryRow<T> {
    pub fn is_dirichlet(&self) -> bool {
        matches!(self, BoundaryRow::Dirichlet)
    }
}

/// Assembled `L_h` with its boundary rows.
#[derive(Debug, Clone)]
pub struct DiscreteOperator<T: Real> {
    grid: Grid,
    block_dim: usize,
    matrix: BlockTridiagonal<T>,
    bc_left: BoundaryRow<T>,
    bc_right: BoundaryRow<T>,
    conditioning: &'static str,
}

struct Energy<'a, T: Real> {
    grid: Grid,
    drift: &'a DMatrix<T>,
    precision: &'a DMatrix<T>,
    /// `A21^* Sigma_2 A21`, lumped trapezoidal weight over each interval.
    observation: Option<DMatrix<T>>,
    /// Extra precision at node 0 (`Sigma_0^{-1}` or `Lambda^{-1}`).
    left_prior: Option<DMatrix<T>>,
}

impl<T: Real> Energy<'_, T> {
    /// `L_h = -Q / h` before Dirichlet rows are imposed.
    fn assemble(&self) -> BlockTridiagonal<T> {
        let d = self.drift.nrows();
        let n = self.grid.n_nodes();
        let h: T = self.grid.spacing();
        let step = DMatrix::identity(d, d) + self.drift * h;
        let sp = self.precision * &step;
        let ptsp = step.transpose() * &sp;
        let mut q = BlockTridiagonal::zeros(n, d);
        for k in 1..n {
            q.diag[k] += self.precision / h;
            q.diag[k - 1] += &ptsp / h;
            q.lower[k - 1] -= &sp / h;
            q.upper[k - 1] -= sp.transpose() / h;
            if let Some(obs) = &self.observation {
                let half = obs * (h / lit(2.0));
                q.diag[k - 1] += &half;
                q.diag[k] += half;
            }
        }
        if let Some(prior) = &self.left_prior {
            q.diag[0] += prior;
        }
        q.scale_shift(-T::one() / h, T::zero())
    }
}

fn impose_dirichlet<T: Real>(m: &mut BlockTridiagonal<T>, left: bool, right: bool) {
    let n = m.n_blocks();
    if left {
        m.diag[0].fill_with_identity();
        m.upper[0].fill(T::zero());
    }
    if right {
        m.diag[n - 1].fill_with_identity();
        m.lower[n - 2].fill(T::zero());
    }
}

/// Operator for the fixed-left, Gaussian-left or bridge conditioning.
/// Observation conditionings are forwarded to [`assemble_kalman_operator`].
pub fn assemble_operator<T: Real>(
    model: &LinearSdeModel<T>,
    cond: &Conditioning<T>,
    grid: Grid,
) -> Result<DiscreteOperator<T>> {
    if let Conditioning::Observation { obs, .. } = cond {
        return assemble_kalman_operator(obs, grid);
    }
    model.check_shapes()?;
    cond.validate(model.dim())?;
    let precision = model.noise_precision()?;
    let a = &model.drift;
    let (left_prior, bc_left, bc_right) = match cond {
        Conditioning::FixedLeft { .. } => (None, BoundaryRow::Dirichlet, BoundaryRow::Robin(a.clone())),
        Conditioning::GaussianLeft { sigma, .. } => {
            let sigma_inv = invert_spd(sigma, "sigma")?;
            let robin = a + model.noise_cov() * &sigma_inv;
            (Some(sigma_inv), BoundaryRow::Robin(robin), BoundaryRow::Robin(a.clone()))
        }
        Conditioning::Bridge { .. } => (None, BoundaryRow::Dirichlet, BoundaryRow::Dirichlet),
        Conditioning::Observation { .. } => unreachable!("handled above"),
    };
    let energy = Energy {
        grid,
        drift: a,
        precision: &precision,
        observation: None,
        left_prior,
    };
    let mut matrix = energy.assemble();
    impose_dirichlet(&mut matrix, bc_left.is_dirichlet(), bc_right.is_dirichlet());
    Ok(DiscreteOperator {
        grid,
        block_dim: model.dim(),
        matrix,
        bc_left,
        bc_right,
        conditioning: cond.tag(),
    })
}

/// `L11 = (d/du + A11^*) Sigma_1 (d/du - A11) - A21^* Sigma_2 A21` with the
/// Robin rows `x'(0) = (A11 + B11 B11^* Lambda^{-1}) x(0)`, `x'(1) = A11 x(1)`.
pub fn assemble_kalman_operator<T: Real>(obs: &ObservationModel<T>, grid: Grid) -> Result<DiscreteOperator<T>> {
    obs.check_shapes()?;
    let sigma1 = obs.sigma1()?;
    let sigma2 = obs.sigma2()?;
    let lambda_inv = invert_spd(&obs.lambda, "lambda")?;
    let q11 = &obs.b11 * obs.b11.transpose();
    let energy = Energy {
        grid,
        drift: &obs.a11,
        precision: &sigma1,
        observation: Some(obs.a21.transpose() * &sigma2 * &obs.a21),
        left_prior: Some(lambda_inv.clone()),
    };
    Ok(DiscreteOperator {
        grid,
        block_dim: obs.dim_x(),
        matrix: energy.assemble(),
        bc_left: BoundaryRow::Robin(&obs.a11 + q11 * lambda_inv),
        bc_right: BoundaryRow::Robin(obs.a11.clone()),
        conditioning: "observation",
    })
}

impl<T: Real> DiscreteOperator<T> {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn conditioning(&self) -> &'static str {
        self.conditioning
    }

    pub fn bc_left(&self) -> &BoundaryRow<T> {
        &self.bc_left
    }

    pub fn bc_right(&self) -> &BoundaryRow<T> {
        &self.bc_right
    }

    /// Full block-tridiagonal matrix including identity Dirichlet rows.
    pub fn matrix(&self) -> &BlockTridiagonal<T> {
        &self.matrix
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        self.matrix.to_dense()
    }

    /// Node range `start..end` not fixed by Dirichlet rows.
    pub fn free_range(&self) -> (usize, usize) {
        let start = usize::from(self.bc_left.is_dirichlet());
        let end = self.grid.n_nodes() - usize::from(self.bc_right.is_dirichlet());
        (start, end)
    }

    pub fn is_free(&self, node: usize) -> bool {
        let (s, e) = self.free_range();
        (s..e).contains(&node)
    }

    /// `L_h` restricted to the free nodes; symmetric.
    pub fn free_block(&self) -> BlockTridiagonal<T> {
        let (s, e) = self.free_range();
        self.matrix.sub_range(s, e)
    }

    /// Discrete target precision `-h L_h` on the free nodes.
    pub fn precision(&self) -> BlockTridiagonal<T> {
        let h: T = self.grid.spacing();
        self.free_block().scale_shift(-h, T::zero())
    }

    /// `(-h L_h)^{-1}` on the free nodes, embedded in the full grid with
    /// zero rows and columns at Dirichlet nodes. This is the covariance of
    /// the discretized target measure and `(-L_h)^{-1} / h` in operator terms.
    pub fn covariance(&self) -> Result<DMatrix<T>> {
        let d = self.block_dim;
        let (s, e) = self.free_range();
        let q = self.precision().to_dense();
        let inv = lu_solve(&q, &DMatrix::identity(q.nrows(), q.ncols()), "discrete precision")?;
        let inv = crate::linalg::symmetrize(&inv);
        let n = self.grid.n_nodes() * d;
        let mut out = DMatrix::zeros(n, n);
        out.view_mut((s * d, s * d), ((e - s) * d, (e - s) * d)).copy_from(&inv);
        Ok(out)
    }

    /// Eigenvalues of `-L_h` on the free nodes, ascending.
    pub fn spectrum(&self) -> Vec<T> {
        let m = -self.free_block().to_dense();
        let eig = SymmetricEigen::new(crate::linalg::symmetrize(&m));
        let mut ev: Vec<T> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        ev
    }

    pub fn apply(&self, x: &DVector<T>) -> DVector<T> {
        self.matrix.mul_vec(x)
    }

    /// Sparse text export: `%` comment lines, a `rows cols nnz` line, then
    /// one `row col value` triple per nonzero with 0-based indices.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let dense = self.to_dense();
        let mut entries = Vec::new();
        for r in 0..dense.nrows() {
            for c in 0..dense.ncols() {
                let v = dense[(r, c)];
                if v != T::zero() {
                    entries.push((r, c, crate::to_f64(v)));
                }
            }
        }
        writeln!(w, "% discrete operator, conditioning = {}", self.conditioning)?;
        writeln!(w, "% 0-based indices; node-major layout, block size {}", self.block_dim)?;
        writeln!(w, "{} {} {}", dense.nrows(), dense.ncols(), entries.len())?;
        for (r, c, v) in entries {
            writeln!(w, "{r} {c} {v:.16e}")?;
        }
        Ok(())
    }
}

/// Green's-function residual of `(operator, kernel)`.
///
/// With `K = h [C(u_i, u_j)]`, returns the larger of
/// `max |L_h K + I|` over the non-Dirichlet rows (Robin rows included) and
/// `max |C(u_i, .)|` over the Dirichlet nodes, where the kernel must vanish.
/// Tends to zero under refinement exactly when the kernel is the Green's
/// function of `-L` with the operator's boundary conditions.
pub fn greens_residual<T: Real>(op: &DiscreteOperator<T>, kernel: &GaussKernel<T>) -> Result<T> {
    if kernel.dim() != op.block_dim {
        return Err(Error::DimensionMismatch {
            context: "kernel vs operator block size",
            expected: op.block_dim,
            got: kernel.dim(),
        });
    }
    let grid = op.grid;
    let d = op.block_dim;
    let h: T = grid.spacing();
    let gram = kernel.gram(grid);
    let lk = op.matrix.mul_mat(&(&gram * h));
    let mut worst = T::zero();
    for node in 0..grid.n_nodes() {
        for a in 0..d {
            let row = node * d + a;
            if op.is_free(node) {
                for col in 0..gram.ncols() {
                    let delta = if col == row { T::one() } else { T::zero() };
                    worst = worst.max((lk[(row, col)] + delta).abs());
                }
            } else {
                worst = worst.max(gram.row(row).amax());
            }
        }
    }
    Ok(worst)
}

/// Right hand side of `L_h M = rhs` encoding the boundary data and sources.
fn mean_rhs<T: Real>(op: &DiscreteOperator<T>, cond: &Conditioning<T>) -> Result<DVector<T>> {
    let d = op.block_dim;
    let n = op.grid.n_nodes();
    let h: T = op.grid.spacing();
    let mut rhs = DVector::zeros(n * d);
    match cond {
        Conditioning::FixedLeft { x_minus } => rhs.rows_mut(0, d).copy_from(x_minus),
        Conditioning::GaussianLeft { x_minus, sigma } => {
            let sigma_inv = invert_spd(sigma, "sigma")?;
            rhs.rows_mut(0, d).copy_from(&(-(sigma_inv * x_minus) / h));
        }
        Conditioning::Bridge { x_minus, x_plus } => {
            rhs.rows_mut(0, d).copy_from(x_minus);
            rhs.rows_mut((n - 1) * d, d).copy_from(x_plus);
        }
        Conditioning::Observation { obs, y_path } => {
            let g = drift_from_observation(obs, y_path, op.grid)?;
            rhs -= g.as_vector();
            let lambda_inv = invert_spd(&obs.lambda, "lambda")?;
            let head = rhs.rows(0, d) - lambda_inv * &obs.x_minus / h;
            rhs.rows_mut(0, d).copy_from(&head);
        }
    }
    Ok(rhs)
}

/// Discrete stationary mean `M`: solves `L_h M = rhs` where `rhs` carries
/// the inhomogeneous boundary data (and, for observations, the source
/// `-A21^* Sigma_2 dY/du`).
pub fn solve_mean_bvp<T: Real>(op: &DiscreteOperator<T>, cond: &Conditioning<T>) -> Result<Path<T>> {
    if cond.tag() != op.conditioning {
        return Err(Error::ConditioningMismatch {
            operator: op.conditioning,
            given: cond.tag(),
        });
    }
    cond.validate(op.block_dim)?;
    let rhs = mean_rhs(op, cond)?;
    let sol = op.matrix.solve(&rhs)?;
    Path::new(op.grid, op.block_dim, sol)
}

/// Residual `L_h M - rhs` of a candidate mean, relative to `max |rhs|`.
pub fn mean_bvp_residual<T: Real>(op: &DiscreteOperator<T>, cond: &Conditioning<T>, mean: &Path<T>) -> Result<T> {
    let rhs = mean_rhs(op, cond)?;
    let r = op.apply(mean.as_vector()) - &rhs;
    Ok(r.amax() / rhs.amax().max(T::one()))
}

/// `(-L_h)^{-1} e_k / h`: discrete Green's function column for node `k`.
pub fn green_column<T: Real>(op: &DiscreteOperator<T>, node: usize, component: usize) -> Result<DVector<T>> {
    let d = op.block_dim;
    let h: T = op.grid.spacing();
    let mut delta = DVector::zeros(op.grid.n_nodes() * d);
    if op.is_free(node) {
        delta[node * d + component] = -T::one() / h;
    }
    let sol = op.matrix.solve(&delta)?;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{kernel_bridge, kernel_fixed_left, kernel_gaussian_left};
    use crate::linalg::{asymmetry, min_eigenvalue};
    use approx::assert_relative_eq;

    fn m(rows: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, data.len() / rows, data)
    }

    fn v(data: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(data)
    }

    fn bm() -> LinearSdeModel<f64> {
        LinearSdeModel::new(m(1, &[0.0]), m(1, &[1.0])).unwrap()
    }

    fn stable2() -> LinearSdeModel<f64> {
        LinearSdeModel::new(m(2, &[-1.2, 0.5, -0.3, -0.8]), m(2, &[1.0, 0.2, -0.4, 0.9])).unwrap()
    }

    fn scalar_obs(a11: f64, a21: f64, lambda: f64) -> ObservationModel<f64> {
        ObservationModel::new(m(1, &[a11]), m(1, &[a21]), m(1, &[1.0]), m(1, &[1.0]), m(1, &[lambda]), v(&[0.0])).unwrap()
    }

    #[test]
    fn bridge_stencil_is_dirichlet_laplacian() {
        let grid = Grid::new(9).unwrap();
        let cond = Conditioning::Bridge { x_minus: v(&[0.0]), x_plus: v(&[0.0]) };
        let op = assemble_operator(&bm(), &cond, grid).unwrap();
        let h2 = 64.0;
        let dense = op.to_dense();
        for j in 1..8 {
            assert_relative_eq!(dense[(j, j - 1)], h2, epsilon = 1e-9);
            assert_relative_eq!(dense[(j, j)], -2.0 * h2, epsilon = 1e-9);
            assert_relative_eq!(dense[(j, j + 1)], h2, epsilon = 1e-9);
        }
        assert_eq!(dense.row(0).iter().copied().collect::<Vec<_>>()[..2], [1.0, 0.0]);
        assert_eq!(dense[(8, 8)], 1.0);
        assert_eq!(dense[(8, 7)], 0.0);
    }

    #[test]
    fn fixed_left_rows() {
        let grid = Grid::new(9).unwrap();
        let cond = Conditioning::FixedLeft { x_minus: v(&[0.0]) };
        let op = assemble_operator(&bm(), &cond, grid).unwrap();
        let dense = op.to_dense();
        assert_eq!(dense[(0, 0)], 1.0);
        assert_eq!(dense[(0, 1)], 0.0);
        // right row is the one-sided derivative (x_J - x_{J-1}) / h scaled by -1/h
        assert_relative_eq!(dense[(8, 8)], -64.0, epsilon = 1e-9);
        assert_relative_eq!(dense[(8, 7)], 64.0, epsilon = 1e-9);
        assert_eq!(op.bc_right(), &BoundaryRow::Robin(m(1, &[0.0])));
    }

    #[test]
    fn bridge_spectrum_near_pi_squared() {
        let cond = Conditioning::Bridge { x_minus: v(&[0.0]), x_plus: v(&[0.0]) };
        let op = assemble_operator(&bm(), &cond, Grid::new(64).unwrap()).unwrap();
        let lmin = op.spectrum()[0];
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((lmin - pi2).abs() / pi2 < 0.02, "{lmin}");
    }

    #[test]
    fn kalman_operator_without_coupling_is_gaussian_left() {
        let grid = Grid::new(17).unwrap();
        let obs = scalar_obs(-0.4, 0.0, 0.7);
        let kal = assemble_kalman_operator(&obs, grid).unwrap();
        let cond = Conditioning::GaussianLeft { x_minus: v(&[0.0]), sigma: m(1, &[0.7]) };
        let gl = assemble_operator(&obs.signal_model(), &cond, grid).unwrap();
        assert!((kal.to_dense() - gl.to_dense()).amax() < 1e-9);
    }

    #[test]
    fn kalman_interior_stencil() {
        let grid = Grid::new(11).unwrap();
        let op = assemble_kalman_operator(&scalar_obs(0.0, 1.0, 1.0), grid).unwrap();
        let dense = op.to_dense();
        for j in 1..10 {
            assert_relative_eq!(dense[(j, j - 1)], 100.0, epsilon = 1e-9);
            assert_relative_eq!(dense[(j, j)], -200.0 - 1.0, epsilon = 1e-9);
            assert_relative_eq!(dense[(j, j + 1)], 100.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn operators_symmetric_and_negative_definite() {
        let grid = Grid::new(33).unwrap();
        let model = stable2();
        let x = v(&[0.5, -0.5]);
        let conds = [
            Conditioning::FixedLeft { x_minus: x.clone() },
            Conditioning::GaussianLeft { x_minus: x.clone(), sigma: m(2, &[1.0, 0.2, 0.2, 0.5]) },
            Conditioning::Bridge { x_minus: x.clone(), x_plus: x.clone() },
        ];
        for c in &conds {
            let op = assemble_operator(&model, c, grid).unwrap();
            let f = op.free_block().to_dense();
            assert!(asymmetry(&f) / f.amax() <= 1e-12, "{}", c.tag());
            assert!(min_eigenvalue(&(-f)) > 0.0, "{}", c.tag());
        }
        let obs = ObservationModel::new(
            m(2, &[-0.5, 0.3, 0.0, -1.0]),
            m(1, &[1.0, 0.5]),
            m(2, &[1.0, 0.0, 0.3, 0.7]),
            m(1, &[0.6]),
            m(2, &[1.0, 0.0, 0.0, 2.0]),
            v(&[0.0, 1.0]),
        )
        .unwrap();
        let op = assemble_kalman_operator(&obs, grid).unwrap();
        let f = op.to_dense();
        assert!(asymmetry(&f) / f.amax() <= 1e-10);
        assert!(min_eigenvalue(&(-f)) > 0.0);
    }

    #[test]
    fn singular_noise_is_signalled() {
        let model = LinearSdeModel { drift: DMatrix::zeros(1, 1), noise: DMatrix::zeros(1, 1) };
        let cond = Conditioning::FixedLeft { x_minus: v(&[0.0]) };
        assert!(matches!(assemble_operator(&model, &cond, Grid::new(5).unwrap()), Err(Error::Singular(_))));
    }

    #[test]
    fn greens_residual_examples() {
        let model = bm();
        let x = v(&[0.0]);
        let bridge = Conditioning::Bridge { x_minus: x.clone(), x_plus: x.clone() };
        let fixed = Conditioning::FixedLeft { x_minus: x.clone() };
        let kb = kernel_bridge(&model, &x, &x).unwrap();
        let kf = kernel_fixed_left(&model, &x).unwrap();
        for j in [33, 65] {
            let grid = Grid::new(j).unwrap();
            let ob = assemble_operator(&model, &bridge, grid).unwrap();
            let of = assemble_operator(&model, &fixed, grid).unwrap();
            assert!(greens_residual(&ob, &kb).unwrap() <= 1e-9);
            assert!(greens_residual(&of, &kf).unwrap() <= 1e-9);
            // negative control: bridge operator with the fixed-left kernel
            assert!(greens_residual(&ob, &kf).unwrap() >= 0.9);
        }
    }

    #[test]
    fn greens_residual_first_order_for_nontrivial_model() {
        let model = stable2();
        let x = v(&[0.0, 0.0]);
        let k = kernel_gaussian_left(&model, &x, &m(2, &[1.0, 0.0, 0.0, 1.0])).unwrap();
        let cond = Conditioning::GaussianLeft { x_minus: x.clone(), sigma: m(2, &[1.0, 0.0, 0.0, 1.0]) };
        let r: Vec<f64> = [33, 65, 129]
            .iter()
            .map(|&j| {
                let op = assemble_operator(&model, &cond, Grid::new(j).unwrap()).unwrap();
                greens_residual(&op, &k).unwrap()
            })
            .collect();
        let ratio = r[1] / r[2];
        assert!((1.5..=2.5).contains(&ratio), "{r:?}");
    }

    #[test]
    fn mean_bvp_examples() {
        let grid = Grid::new(33).unwrap();
        let bridge = Conditioning::Bridge { x_minus: v(&[1.0]), x_plus: v(&[-3.0]) };
        let op = assemble_operator(&bm(), &bridge, grid).unwrap();
        let mean = solve_mean_bvp(&op, &bridge).unwrap();
        for j in 0..33 {
            let u: f64 = grid.node(j);
            assert!((mean.get(j, 0) - ((1.0 - u) - 3.0 * u)).abs() < 1e-10);
        }
        assert!(mean_bvp_residual(&op, &bridge, &mean).unwrap() < 1e-10);

        let model = stable2();
        let x = v(&[1.0, -1.0]);
        let fixed = Conditioning::FixedLeft { x_minus: x.clone() };
        let errs: Vec<f64> = [65, 129]
            .iter()
            .map(|&j| {
                let g = Grid::new(j).unwrap();
                let op = assemble_operator(&model, &fixed, g).unwrap();
                let mean = solve_mean_bvp(&op, &fixed).unwrap();
                assert_eq!(mean.at(0), x);
                let exact = kernel_fixed_left(&model, &x).unwrap().mean_path(g);
                mean.max_abs_diff(&exact).unwrap()
            })
            .collect();
        assert!(errs[0] < 0.02 && errs[0] / errs[1] > 1.7, "{errs:?}");
    }

    #[test]
    fn mean_bvp_rejects_other_conditioning() {
        let grid = Grid::new(9).unwrap();
        let fixed = Conditioning::FixedLeft { x_minus: v(&[0.0]) };
        let bridge = Conditioning::Bridge { x_minus: v(&[0.0]), x_plus: v(&[0.0]) };
        let op = assemble_operator(&bm(), &fixed, grid).unwrap();
        assert!(matches!(solve_mean_bvp(&op, &bridge), Err(Error::ConditioningMismatch { .. })));
    }

    #[test]
    fn discrete_green_column_approximates_kernel() {
        let model = stable2();
        let x = v(&[0.0, 0.0]);
        let cond = Conditioning::FixedLeft { x_minus: x.clone() };
        let k = kernel_fixed_left(&model, &x).unwrap();
        let err = |j: usize| {
            let grid = Grid::new(j).unwrap();
            let op = assemble_operator(&model, &cond, grid).unwrap();
            let node = (j - 1) / 2;
            let col = green_column(&op, node, 1).unwrap();
            let mut e: f64 = 0.0;
            for i in 0..j {
                let c = k.cov(grid.node(i), grid.node(node));
                for a in 0..2 {
                    e = e.max((col[i * 2 + a] - c[(a, 1)]).abs());
                }
            }
            e
        };
        let (e1, e2) = (err(33), err(65));
        assert!(e1 < 0.05 && e1 / e2 > 1.6, "{e1} {e2}");
    }

    #[test]
    fn matrix_market_export() {
        let cond = Conditioning::Bridge { x_minus: v(&[0.0]), x_plus: v(&[0.0]) };
        let op = assemble_operator(&bm(), &cond, Grid::new(4).unwrap()).unwrap();
        let mut buf = Vec::new();
        op.write_matrix_market(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('%')).collect();
        assert_eq!(lines[0], "4 4 8");
        assert_eq!(lines[1], "0 0 1.0000000000000000e0");
    }
}
