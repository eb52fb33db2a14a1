//! Linear SDE models, conditionings, grids and paths, plus the matrix
//! primitives (`e^{tA}` and the controllability Gram integral) every kernel
//! is built from.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::linalg::{asymmetry, lu_solve, symmetrize};
use crate::rng::{seeded, std_normal_vec, SimRng};
use crate::{lit, Error, Real, Result};

/// Smallest admissible singular value of a noise covariance `BB^*`.
pub const MIN_SINGULAR_VALUE: f64 = 1e-12;
/// Symmetry tolerance for user-supplied covariance matrices.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// `dX = A X du + B dW` on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSdeModel<T: Real> {
    pub drift: DMatrix<T>,
    pub noise: DMatrix<T>,
}

impl<T: Real> LinearSdeModel<T> {
    /// Builds a model, requiring square matching matrices and invertible `BB^*`.
    pub fn new(drift: DMatrix<T>, noise: DMatrix<T>) -> Result<Self> {
        let model = Self { drift, noise };
        model.check_shapes()?;
        model.noise_precision()?;
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }

    pub(crate) fn check_shapes(&self) -> Result<()> {
        let d = self.drift.nrows();
        if d == 0 || !self.drift.is_square() {
            return Err(Error::invalid("drift", "A must be a non-empty square matrix"));
        }
        if self.noise.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                context: "noise matrix B (rows)",
                expected: d,
                got: self.noise.nrows(),
            });
        }
        Ok(())
    }

    /// `BB^*`.
    pub fn noise_cov(&self) -> DMatrix<T> {
        &self.noise * self.noise.transpose()
    }

    /// `(BB^*)^{-1}`, or an error when `BB^*` is numerically singular.
    pub fn noise_precision(&self) -> Result<DMatrix<T>> {
        invert_spd(&self.noise_cov(), "noise covariance BB*")
    }
}

/// Inverse of a symmetric positive semidefinite matrix whose smallest
/// singular value exceeds [`MIN_SINGULAR_VALUE`].
pub(crate) fn invert_spd<T: Real>(m: &DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    let svd = m.clone().svd(false, false);
    let smin = svd.singular_values.iter().fold(T::max_value().unwrap(), |a, &b| a.min(b));
    if smin <= lit(MIN_SINGULAR_VALUE) {
        return Err(Error::Singular(format!("{what} (smallest singular value {smin})")));
    }
    let inv = lu_solve(m, &DMatrix::identity(m.nrows(), m.ncols()), what)?;
    Ok(symmetrize(&inv))
}

/// Checks that `m` is symmetric to [`SYMMETRY_TOL`] and positive definite.
pub(crate) fn check_spd<T: Real>(m: &DMatrix<T>, name: &'static str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::invalid(name, "must be square"));
    }
    let scale = m.amax().max(T::one());
    if asymmetry(m) > lit::<T>(SYMMETRY_TOL) * scale {
        return Err(Error::invalid(name, "must be symmetric"));
    }
    if Cholesky::new(symmetrize(m)).is_none() {
        return Err(Error::NotPositiveDefinite(format!("{name} is not positive definite")));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    if eig.eigenvalues.iter().any(|&l| l <= T::zero()) {
        return Err(Error::NotPositiveDefinite(format!("{name} is not positive definite")));
    }
    Ok(())
}

/// Signal/observation pair
/// `dX = A11 X du + B11 dWx`, `dY = A21 X du + B22 dWy`,
/// with `X(0) ~ N(x_minus, lambda)` and `Y(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel<T: Real> {
    pub a11: DMatrix<T>,
    pub a21: DMatrix<T>,
    pub b11: DMatrix<T>,
    pub b22: DMatrix<T>,
    pub lambda: DMatrix<T>,
    pub x_minus: DVector<T>,
}

impl<T: Real> ObservationModel<T> {
    pub fn new(
        a11: DMatrix<T>,
        a21: DMatrix<T>,
        b11: DMatrix<T>,
        b22: DMatrix<T>,
        lambda: DMatrix<T>,
        x_minus: DVector<T>,
    ) -> Result<Self> {
        let obs = Self {
            a11,
            a21,
            b11,
            b22,
            lambda,
            x_minus,
        };
        obs.validate()?;
        Ok(obs)
    }

    pub fn dim_x(&self) -> usize {
        self.a11.nrows()
    }

    pub fn dim_y(&self) -> usize {
        self.a21.nrows()
    }

    pub(crate) fn check_shapes(&self) -> Result<()> {
        let m = self.a11.nrows();
        let n = self.a21.nrows();
        if m == 0 || !self.a11.is_square() {
            return Err(Error::invalid("a11", "must be a non-empty square matrix"));
        }
        if n == 0 || self.a21.ncols() != m {
            return Err(Error::invalid("a21", format!("must be n x {m} with n >= 1")));
        }
        if self.b11.shape() != (m, m) {
            return Err(Error::invalid("b11", format!("must be {m} x {m}")));
        }
        if self.b22.shape() != (n, n) {
            return Err(Error::invalid("b22", format!("must be {n} x {n}")));
        }
        if self.lambda.shape() != (m, m) {
            return Err(Error::invalid("lambda", format!("must be {m} x {m}")));
        }
        if self.x_minus.len() != m {
            return Err(Error::DimensionMismatch {
                context: "observation model x_minus",
                expected: m,
                got: self.x_minus.len(),
            });
        }
        Ok(())
    }

    /// Full invariant check: shapes, invertible `B11 B11^*`, `B22 B22^*`,
    /// and symmetric positive definite `lambda`.
    pub fn validate(&self) -> Result<()> {
        self.check_shapes()?;
        self.sigma1()?;
        self.sigma2()?;
        check_spd(&self.lambda, "lambda")
    }

    /// `Sigma_1 = (B11 B11^*)^{-1}`.
    pub fn sigma1(&self) -> Result<DMatrix<T>> {
        invert_spd(&(&self.b11 * self.b11.transpose()), "B11 B11*")
    }

    /// `Sigma_2 = (B22 B22^*)^{-1}`.
    pub fn sigma2(&self) -> Result<DMatrix<T>> {
        invert_spd(&(&self.b22 * self.b22.transpose()), "B22 B22*")
    }

    /// Signal-only model `dX = A11 X du + B11 dWx`.
    pub fn signal_model(&self) -> LinearSdeModel<T> {
        LinearSdeModel {
            drift: self.a11.clone(),
            noise: self.b11.clone(),
        }
    }

    /// The stacked `(m + n)`-dimensional model for `(X, Y)`.
    pub fn stacked_model(&self) -> LinearSdeModel<T> {
        let (m, n) = (self.dim_x(), self.dim_y());
        let mut a = DMatrix::zeros(m + n, m + n);
        a.view_mut((0, 0), (m, m)).copy_from(&self.a11);
        a.view_mut((m, 0), (n, m)).copy_from(&self.a21);
        let mut b = DMatrix::zeros(m + n, m + n);
        b.view_mut((0, 0), (m, m)).copy_from(&self.b11);
        b.view_mut((m, m), (n, n)).copy_from(&self.b22);
        LinearSdeModel { drift: a, noise: b }
    }
}

/// What the path measure is conditioned on.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum Conditioning<T: Real> {
    /// `X(0) = x_minus`.
    FixedLeft { x_minus: DVector<T> },
    /// `X(0) ~ N(x_minus, sigma)`, independent of the driving noise.
    GaussianLeft {
        x_minus: DVector<T>,
        sigma: DMatrix<T>,
    },
    /// `X(0) = x_minus`, `X(1) = x_plus`.
    Bridge {
        x_minus: DVector<T>,
        x_plus: DVector<T>,
    },
    /// Signal `X` given the observation path `Y`.
    Observation {
        obs: ObservationModel<T>,
        y_path: Path<T>,
    },
}

impl<T: Real> Conditioning<T> {
    pub fn tag(&self) -> &'static str {
        match self {
            Conditioning::FixedLeft { .. } => "fixed_left",
            Conditioning::GaussianLeft { .. } => "gaussian_left",
            Conditioning::Bridge { .. } => "bridge",
            Conditioning::Observation { .. } => "observation",
        }
    }

    /// Dimension of the sampled process.
    pub fn dim(&self) -> usize {
        match self {
            Conditioning::FixedLeft { x_minus }
            | Conditioning::GaussianLeft { x_minus, .. }
            | Conditioning::Bridge { x_minus, .. } => x_minus.len(),
            Conditioning::Observation { obs, .. } => obs.dim_x(),
        }
    }

    /// Checks the conditioning's own invariants against a state dimension.
    pub fn validate(&self, dim: usize) -> Result<()> {
        let check = |v: &DVector<T>, context| {
            if v.len() != dim {
                Err(Error::DimensionMismatch {
                    context,
                    expected: dim,
                    got: v.len(),
                })
            } else {
                Ok(())
            }
        };
        match self {
            Conditioning::FixedLeft { x_minus } => check(x_minus, "x_minus"),
            Conditioning::GaussianLeft { x_minus, sigma } => {
                check(x_minus, "x_minus")?;
                if sigma.shape() != (dim, dim) {
                    return Err(Error::invalid("sigma", format!("must be {dim} x {dim}")));
                }
                check_spd(sigma, "sigma")
            }
            Conditioning::Bridge { x_minus, x_plus } => {
                check(x_minus, "x_minus")?;
                check(x_plus, "x_plus")
            }
            Conditioning::Observation { obs, y_path } => {
                obs.validate()?;
                if obs.dim_x() != dim {
                    return Err(Error::DimensionMismatch {
                        context: "observation signal dimension",
                        expected: dim,
                        got: obs.dim_x(),
                    });
                }
                if y_path.dim() != obs.dim_y() {
                    return Err(Error::DimensionMismatch {
                        context: "observation path dimension",
                        expected: obs.dim_y(),
                        got: y_path.dim(),
                    });
                }
                Ok(())
            }
        }
    }
}

/// Uniform grid `u_j = j / (J - 1)`, `j = 0..J`, on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    n_nodes: usize,
}

impl Grid {
    pub fn new(n_nodes: usize) -> Result<Self> {
        if n_nodes < 3 {
            return Err(Error::invalid(
                "grid size",
                format!("need at least 3 nodes, got {n_nodes}"),
            ));
        }
        Ok(Self { n_nodes })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Spacing `h = 1 / (J - 1)`.
    pub fn spacing<T: Real>(&self) -> T {
        T::one() / lit::<T>((self.n_nodes - 1) as f64)
    }

    /// Node `u_j`; exactly `0` at `j = 0` and exactly `1` at `j = J - 1`.
    pub fn node<T: Real>(&self, j: usize) -> T {
        lit::<T>(j as f64) / lit::<T>((self.n_nodes - 1) as f64)
    }

    pub fn nodes<T: Real>(&self) -> Vec<T> {
        (0..self.n_nodes).map(|j| self.node(j)).collect()
    }

    /// Coarse grid containing every `stride`-th node of this one.
    pub fn coarsen(&self, stride: usize) -> Result<Self> {
        if stride == 0 || !(self.n_nodes - 1).is_multiple_of(stride) {
            return Err(Error::GridMismatch(format!(
                "stride {stride} does not divide {} intervals",
                self.n_nodes - 1
            )));
        }
        Grid::new((self.n_nodes - 1) / stride + 1)
    }
}

/// Grid function with values in `R^dim`, stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Path<T: Real> {
    grid: Grid,
    dim: usize,
    data: DVector<T>,
}

impl<T: Real> Path<T> {
    pub fn new(grid: Grid, dim: usize, data: DVector<T>) -> Result<Self> {
        if data.len() != grid.n_nodes() * dim {
            return Err(Error::DimensionMismatch {
                context: "path data length",
                expected: grid.n_nodes() * dim,
                got: data.len(),
            });
        }
        Ok(Self { grid, dim, data })
    }

    pub fn zeros(grid: Grid, dim: usize) -> Self {
        Self {
            grid,
            dim,
            data: DVector::zeros(grid.n_nodes() * dim),
        }
    }

    pub fn from_fn(grid: Grid, dim: usize, mut f: impl FnMut(T) -> DVector<T>) -> Self {
        let mut p = Self::zeros(grid, dim);
        for j in 0..grid.n_nodes() {
            let v = f(grid.node(j));
            p.set(j, &v);
        }
        p
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn at(&self, j: usize) -> DVector<T> {
        self.data.rows(j * self.dim, self.dim).into_owned()
    }

    pub fn get(&self, j: usize, k: usize) -> T {
        self.data[j * self.dim + k]
    }

    pub fn set(&mut self, j: usize, v: &DVector<T>) {
        assert_eq!(v.len(), self.dim, "node value dimension");
        self.data.rows_mut(j * self.dim, self.dim).copy_from(v);
    }

    /// Flat node-major values.
    pub fn as_vector(&self) -> &DVector<T> {
        &self.data
    }

    pub fn as_vector_mut(&mut self) -> &mut DVector<T> {
        &mut self.data
    }

    pub fn into_vector(self) -> DVector<T> {
        self.data
    }

    pub fn component(&self, k: usize) -> Vec<T> {
        (0..self.grid.n_nodes()).map(|j| self.get(j, k)).collect()
    }

    /// Restriction to every `stride`-th node.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        let grid = self.grid.coarsen(stride)?;
        let mut out = Path::zeros(grid, self.dim);
        for j in 0..grid.n_nodes() {
            out.set(j, &self.at(j * stride));
        }
        Ok(out)
    }

    /// `max_j max_k |self - other|`.
    pub fn max_abs_diff(&self, other: &Path<T>) -> Result<T> {
        if self.grid != other.grid || self.dim != other.dim {
            return Err(Error::GridMismatch("paths on different grids".into()));
        }
        Ok((&self.data - &other.data).amax())
    }
}

/// Matrix exponential `e^{tA}`.
///
/// Scaling and squaring with the degree 13 Pade approximant: `tA` is scaled by
/// `2^-s` until its 1-norm is below 5.37, which bounds the backward error of
/// the approximant by the unit roundoff in double precision.
pub fn matrix_exp<T: Real>(a: &DMatrix<T>, t: T) -> DMatrix<T> {
    assert!(a.is_square(), "matrix_exp needs a square matrix");
    let n = a.nrows();
    let mut x = a * t;
    let norm1 = (0..n)
        .map(|j| x.column(j).iter().fold(T::zero(), |s, v| s + v.abs()))
        .fold(T::zero(), |m, v| m.max(v));
    let theta13 = lit::<T>(5.371920351148152);
    let mut squarings = 0u32;
    if norm1 > theta13 {
        let s = (norm1 / theta13).log2().ceil();
        squarings = s.to_u32().unwrap_or(0);
        x *= lit::<T>(2f64.powi(-(squarings as i32)));
    }
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let b = |i: usize| lit::<T>(B[i]);
    let ident = DMatrix::<T>::identity(n, n);
    let x2 = &x * &x;
    let x4 = &x2 * &x2;
    let x6 = &x4 * &x2;
    let u_inner = &x6 * (&x6 * b(13) + &x4 * b(11) + &x2 * b(9))
        + &x6 * b(7)
        + &x4 * b(5)
        + &x2 * b(3)
        + &ident * b(1);
    let u = &x * u_inner;
    let v = &x6 * (&x6 * b(12) + &x4 * b(10) + &x2 * b(8))
        + &x6 * b(6)
        + &x4 * b(4)
        + &x2 * b(2)
        + &ident * b(0);
    let mut r = lu_solve(&(&v - &u), &(&v + &u), "Pade denominator")
        .expect("Pade denominator is nonsingular after scaling");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// Gram integral `G(t) = int_0^t e^{-rA} BB^* e^{-rA^*} dr`.
///
/// Computed with Van Loan's block exponential: the upper right block of
/// `exp(t [[A, BB^*], [0, -A^*]])` equals `e^{tA} G(t)`, and the lower right
/// block is `e^{-tA^*}`, so `G(t) = (lower right)^* (upper right)`. The only
/// error source is `matrix_exp`, well below `1e-10` for `|A| <= 10`.
pub fn gram_integral<T: Real>(model: &LinearSdeModel<T>, t: T) -> Result<DMatrix<T>> {
    if !(t >= T::zero() && t <= T::one()) {
        return Err(Error::invalid("t", format!("must lie in [0, 1], got {t}")));
    }
    model.check_shapes()?;
    let d = model.dim();
    if t == T::zero() {
        return Ok(DMatrix::zeros(d, d));
    }
    let mut block = DMatrix::zeros(2 * d, 2 * d);
    block.view_mut((0, 0), (d, d)).copy_from(&model.drift);
    block.view_mut((0, d), (d, d)).copy_from(&model.noise_cov());
    block
        .view_mut((d, d), (d, d))
        .copy_from(&(-model.drift.transpose()));
    let e = matrix_exp(&block, t);
    let upper = e.view((0, d), (d, d)).into_owned();
    let lower = e.view((d, d), (d, d)).into_owned();
    Ok(symmetrize(&(lower.transpose() * upper)))
}

fn check_len<T: Real>(v: &DVector<T>, d: usize, context: &'static str) -> Result<()> {
    if v.len() != d {
        return Err(Error::DimensionMismatch {
            context,
            expected: d,
            got: v.len(),
        });
    }
    Ok(())
}

fn euler_maruyama<T: Real>(
    drift: &DMatrix<T>,
    noise: &DMatrix<T>,
    x0: &DVector<T>,
    grid: Grid,
    rng: &mut SimRng,
) -> Path<T> {
    let d = x0.len();
    let h: T = grid.spacing();
    let sqrt_h = h.sqrt();
    let mut path = Path::zeros(grid, d);
    let mut x = x0.clone();
    path.set(0, &x);
    for j in 1..grid.n_nodes() {
        let xi = std_normal_vec::<T>(rng, noise.ncols());
        x = &x + drift * &x * h + noise * xi * sqrt_h;
        path.set(j, &x);
    }
    path
}

/// Euler-Maruyama path `X_{j+1} = X_j + h A X_j + sqrt(h) B xi_j`.
///
/// Only shapes are checked: degenerate noise (`B = 0`) is allowed here.
pub fn simulate_sde<T: Real>(
    model: &LinearSdeModel<T>,
    x0: &DVector<T>,
    grid: Grid,
    seed: u64,
) -> Result<Path<T>> {
    model.check_shapes()?;
    check_len(x0, model.dim(), "initial state x0")?;
    let mut rng = seeded(seed);
    Ok(euler_maruyama(&model.drift, &model.noise, x0, grid, &mut rng))
}

/// Euler-Maruyama simulation of the signal/observation pair with
/// `X(0) ~ N(x_minus, lambda)` and `Y(0) = 0`. Returns `(X, Y)`.
pub fn simulate_joint_sde<T: Real>(
    obs: &ObservationModel<T>,
    grid: Grid,
    seed: u64,
) -> Result<(Path<T>, Path<T>)> {
    obs.check_shapes()?;
    let (m, n) = (obs.dim_x(), obs.dim_y());
    let mut rng = seeded(seed);
    let z = std_normal_vec::<T>(&mut rng, m);
    let chol = Cholesky::new(symmetrize(&obs.lambda))
        .ok_or_else(|| Error::NotPositiveDefinite("lambda".into()))?;
    let x0 = &obs.x_minus + chol.l() * z;
    let mut start = DVector::zeros(m + n);
    start.rows_mut(0, m).copy_from(&x0);
    let stacked = obs.stacked_model();
    let joint = euler_maruyama(&stacked.drift, &stacked.noise, &start, grid, &mut rng);
    let mut xs = Path::zeros(grid, m);
    let mut ys = Path::zeros(grid, n);
    for j in 0..grid.n_nodes() {
        let v = joint.at(j);
        xs.set(j, &v.rows(0, m).into_owned());
        ys.set(j, &v.rows(m, n).into_owned());
    }
    Ok((xs, ys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn m(rows: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, data.len() / rows, data)
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let e = matrix_exp(&DMatrix::<f64>::zeros(2, 2), 1.0);
        assert_eq!(e, DMatrix::identity(2, 2));
    }

    #[test]
    fn exp_scalar_and_nilpotent() {
        let e = matrix_exp(&m(1, &[-1.0]), 1.0);
        assert_relative_eq!(e[(0, 0)], 0.36787944117144233, max_relative = 1e-14);
        let e = matrix_exp(&m(2, &[0.0, 1.0, 0.0, 0.0]), 2.0);
        assert_relative_eq!(e, m(2, &[1.0, 2.0, 0.0, 1.0]), epsilon = 1e-14);
    }

    #[test]
    fn exp_large_norm_uses_squaring() {
        // diagonalizable: exp(diag(-8, 3))
        let e = matrix_exp(&m(2, &[-8.0, 0.0, 0.0, 3.0]), 1.0);
        assert_relative_eq!(e[(0, 0)], (-8f64).exp(), max_relative = 1e-13);
        assert_relative_eq!(e[(1, 1)], 3f64.exp(), max_relative = 1e-13);
        // rotation generator: exp([[0, w], [-w, 0]]) = rotation by w
        let w = 7.5;
        let e = matrix_exp(&m(2, &[0.0, w, -w, 0.0]), 1.0);
        assert_relative_eq!(e[(0, 0)], w.cos(), epsilon = 1e-12);
        assert_relative_eq!(e[(0, 1)], w.sin(), epsilon = 1e-12);
    }

    #[test]
    fn gram_integral_examples() {
        let bm = LinearSdeModel::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2)).unwrap();
        assert_relative_eq!(
            gram_integral(&bm, 0.5).unwrap(),
            DMatrix::identity(2, 2) * 0.5,
            epsilon = 1e-14
        );
        let ou = LinearSdeModel::new(m(1, &[-1.0]), m(1, &[1.0])).unwrap();
        let g = gram_integral(&ou, 1.0).unwrap();
        assert_relative_eq!(g[(0, 0)], 3.194528049465325, max_relative = 1e-12);
        assert_eq!(gram_integral(&ou, 0.0).unwrap(), DMatrix::zeros(1, 1));
        assert!(gram_integral(&ou, 1.5).is_err());
        assert!(gram_integral(&ou, -0.1).is_err());
    }

    #[test]
    fn gram_integral_matches_quadrature() {
        // composite Simpson on the integrand as an independent route
        let model = LinearSdeModel::new(m(2, &[-0.7, 0.4, -0.2, -1.3]), m(2, &[1.0, 0.0, 0.5, 0.8])).unwrap();
        let t = 0.8;
        let n = 2000;
        let q = model.noise_cov();
        let f = |r: f64| {
            let e = matrix_exp(&model.drift, -r);
            &e * &q * e.transpose()
        };
        let hstep = t / n as f64;
        let mut acc = f(0.0) + f(t);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += f(i as f64 * hstep) * w;
        }
        acc *= hstep / 3.0;
        assert_relative_eq!(gram_integral(&model, t).unwrap(), acc, epsilon = 1e-11);
    }

    #[test]
    fn singular_noise_is_rejected() {
        let err = LinearSdeModel::new(DMatrix::<f64>::zeros(2, 2), m(2, &[1.0, 0.0, 0.0, 0.0]));
        assert!(matches!(err, Err(Error::Singular(_))));
    }

    #[test]
    fn grid_endpoints_exact() {
        let g = Grid::new(7).unwrap();
        assert_eq!(g.node::<f64>(0), 0.0);
        assert_eq!(g.node::<f64>(6), 1.0);
        assert!(Grid::new(2).is_err());
        assert_eq!(g.coarsen(3).unwrap().n_nodes(), 3);
        assert!(g.coarsen(4).is_err());
    }

    #[test]
    fn em_without_noise_or_drift_is_constant() {
        let model = LinearSdeModel { drift: DMatrix::<f64>::zeros(1, 1), noise: DMatrix::zeros(1, 1) };
        let p = simulate_sde(&model, &DVector::from_vec(vec![3.0]), Grid::new(9).unwrap(), 1).unwrap();
        assert!(p.component(0).iter().all(|&x| x == 3.0));
    }

    #[test]
    fn em_drift_only_converges_at_first_order() {
        let model = LinearSdeModel { drift: DMatrix::<f64>::identity(1, 1), noise: DMatrix::zeros(1, 1) };
        let x0 = DVector::from_vec(vec![1.0]);
        let err = |j: usize| {
            let g = Grid::new(j).unwrap();
            let p = simulate_sde(&model, &x0, g, 0).unwrap();
            (0..j)
                .map(|i| {
                    let u = g.node::<f64>(i);
                    (p.get(i, 0) - matrix_exp(&model.drift, u)[(0, 0)]).abs()
                })
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(65), err(129));
        assert!(e1 < 0.05);
        let ratio = e1 / e2;
        assert!((1.8..2.2).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn em_is_deterministic_given_seed() {
        let model = LinearSdeModel::new(m(1, &[-1.0]), m(1, &[1.0])).unwrap();
        let x0 = DVector::from_vec(vec![0.5]);
        let g = Grid::new(33).unwrap();
        let a = simulate_sde(&model, &x0, g, 99).unwrap();
        let b = simulate_sde(&model, &x0, g, 99).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, simulate_sde(&model, &x0, g, 100).unwrap());
    }

    #[test]
    fn joint_simulation_without_coupling_keeps_y_zero() {
        let obs = ObservationModel {
            a11: m(1, &[-0.5]),
            a21: m(1, &[0.0]),
            b11: m(1, &[0.0]),
            b22: m(1, &[0.0]),
            lambda: m(1, &[1e-12]),
            x_minus: DVector::from_vec(vec![1.0]),
        };
        let (_, y) = simulate_joint_sde(&obs, Grid::new(17).unwrap(), 3).unwrap();
        assert!(y.component(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn joint_simulation_is_deterministic() {
        let obs = ObservationModel::new(
            m(1, &[0.0]),
            m(1, &[1.0]),
            m(1, &[1.0]),
            m(1, &[1.0]),
            m(1, &[1.0]),
            DVector::from_vec(vec![0.0]),
        )
        .unwrap();
        let g = Grid::new(33).unwrap();
        assert_eq!(simulate_joint_sde(&obs, g, 5).unwrap(), simulate_joint_sde(&obs, g, 5).unwrap());
    }

    proptest! {
        #[test]
        fn exp_semigroup(a in proptest::collection::vec(-1.0f64..1.0, 9), s in 0.0f64..1.0, t in 0.0f64..1.0) {
            let a = DMatrix::from_row_slice(3, 3, &a);
            let lhs = matrix_exp(&a, s) * matrix_exp(&a, t);
            let rhs = matrix_exp(&a, s + t);
            prop_assert!((lhs - rhs).amax() < 1e-10);
        }

        #[test]
        fn gram_monotone_in_loewner_order(a in proptest::collection::vec(-2.0f64..2.0, 4),
                                          b in proptest::collection::vec(-1.0f64..1.0, 4),
                                          t1 in 0.0f64..1.0, dt in 0.0f64..1.0) {
            let mut bm = DMatrix::from_row_slice(2, 2, &b);
            bm[(0, 0)] += 2.0;
            bm[(1, 1)] += 2.0;
            let model = LinearSdeModel { drift: DMatrix::from_row_slice(2, 2, &a), noise: bm };
            let t2 = (t1 + dt).min(1.0);
            let diff = gram_integral(&model, t2).unwrap() - gram_integral(&model, t1).unwrap();
            let lmin = crate::linalg::min_eigenvalue(&diff);
            prop_assert!(lmin >= -1e-10);
        }
    }
}
