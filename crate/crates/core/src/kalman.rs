//! Kalman-Bucy filter and smoother on the grid.
//!
//! ```text
//! dS/du  = A11 S + S A11^* - S A21^* Sigma_2 A21 S + B11 B11^*,   S(0) = Lambda
//! dXh    = A11 Xh du + S A21^* Sigma_2 (dY - A21 Xh du),           Xh(0) = x^-
//! dXt/du = A11 Xt + B11 B11^* S^{-1} (Xt - Xh),                    Xt(1) = Xh(1)
//! ```
//!
//! All three sweeps are fixed-step RK4 on the grid. `dY/du` is the
//! piecewise-constant increment density `(Y_{j+1} - Y_j) / h` on
//! `[u_j, u_{j+1}]`. Midpoint values of `S` and `Xh` come from cubic Hermite
//! interpolation with the sweep's own right hand sides as slopes.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::linalg::{asymmetry, symmetrize};
use crate::model::{invert_spd, Grid, ObservationModel, Path};
use crate::{lit, Error, Real, Result};

/// `S(u_j)` at every grid node.
#[derive(Debug, Clone)]
pub struct RiccatiSolution<T: Real> {
    grid: Grid,
    values: Vec<DMatrix<T>>,
}

impl<T: Real> RiccatiSolution<T> {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn at(&self, j: usize) -> &DMatrix<T> {
        &self.values[j]
    }

    pub fn values(&self) -> &[DMatrix<T>] {
        &self.values
    }

    pub fn max_asymmetry(&self) -> T {
        self.values.iter().fold(T::zero(), |m, s| m.max(asymmetry(s)))
    }
}

struct Coefficients<T: Real> {
    a: DMatrix<T>,
    /// `A21^* Sigma_2 A21`
    info: DMatrix<T>,
    /// `A21^* Sigma_2`
    gain: DMatrix<T>,
    a21: DMatrix<T>,
    q: DMatrix<T>,
}

impl<T: Real> Coefficients<T> {
    fn new(obs: &ObservationModel<T>) -> Result<Self> {
        obs.check_shapes()?;
        let sigma2 = obs.sigma2()?;
        let gain = obs.a21.transpose() * &sigma2;
        Ok(Self {
            a: obs.a11.clone(),
            info: &gain * &obs.a21,
            gain,
            a21: obs.a21.clone(),
            q: &obs.b11 * obs.b11.transpose(),
        })
    }

    fn riccati(&self, s: &DMatrix<T>) -> DMatrix<T> {
        let as_ = &self.a * s;
        &as_ + as_.transpose() - s * &self.info * s + &self.q
    }

    /// Filter right hand side with data rate `ydot`.
    fn filter(&self, s: &DMatrix<T>, x: &DVector<T>, ydot: &DVector<T>) -> DVector<T> {
        &self.a * x + s * (&self.gain * (ydot - &self.a21 * x))
    }
}

fn hermite_mid<T: Real>(h: T, y0: &DMatrix<T>, y1: &DMatrix<T>, f0: &DMatrix<T>, f1: &DMatrix<T>) -> DMatrix<T> {
    let half: T = lit(0.5);
    let eighth: T = lit(0.125);
    (y0 + y1) * half + (f0 - f1) * (h * eighth)
}

fn hermite_mid_vec<T: Real>(h: T, y0: &DVector<T>, y1: &DVector<T>, f0: &DVector<T>, f1: &DVector<T>) -> DVector<T> {
    let half: T = lit(0.5);
    let eighth: T = lit(0.125);
    (y0 + y1) * half + (f0 - f1) * (h * eighth)
}

fn check_grid<T: Real>(s: &RiccatiSolution<T>, path: &Path<T>, what: &str) -> Result<()> {
    if s.grid != path.grid() {
        return Err(Error::GridMismatch(format!(
            "{what} has {} nodes, Riccati solution has {}",
            path.grid().n_nodes(),
            s.grid.n_nodes()
        )));
    }
    Ok(())
}

/// Forward Riccati sweep from `S(0) = Lambda`.
pub fn riccati_forward<T: Real>(obs: &ObservationModel<T>, grid: Grid) -> Result<RiccatiSolution<T>> {
    let c = Coefficients::new(obs)?;
    let h: T = grid.spacing();
    let half: T = lit(0.5);
    let sixth: T = lit(1.0 / 6.0);
    let two: T = lit(2.0);
    let mut s = symmetrize(&obs.lambda);
    let mut values = Vec::with_capacity(grid.n_nodes());
    if Cholesky::new(s.clone()).is_none() {
        return Err(Error::NotPositiveDefinite("lambda".into()));
    }
    values.push(s.clone());
    for j in 1..grid.n_nodes() {
        let k1 = c.riccati(&s);
        let k2 = c.riccati(&(&s + &k1 * (h * half)));
        let k3 = c.riccati(&(&s + &k2 * (h * half)));
        let k4 = c.riccati(&(&s + &k3 * h));
        s = symmetrize(&(&s + (k1 + k2 * two + k3 * two + k4) * (h * sixth)));
        if Cholesky::new(s.clone()).is_none() {
            return Err(Error::NotPositiveDefinite(format!("Riccati solution at node {j}")));
        }
        values.push(s.clone());
    }
    Ok(RiccatiSolution { grid, values })
}

/// Forward filter sweep from `Xh(0) = x^-`.
pub fn filter_forward<T: Real>(obs: &ObservationModel<T>, s: &RiccatiSolution<T>, y_path: &Path<T>) -> Result<Path<T>> {
    check_grid(s, y_path, "observation path")?;
    if y_path.dim() != obs.dim_y() {
        return Err(Error::DimensionMismatch {
            context: "observation path dimension",
            expected: obs.dim_y(),
            got: y_path.dim(),
        });
    }
    let c = Coefficients::new(obs)?;
    let grid = s.grid;
    let h: T = grid.spacing();
    let half: T = lit(0.5);
    let sixth: T = lit(1.0 / 6.0);
    let two: T = lit(2.0);
    let mut out = Path::zeros(grid, obs.dim_x());
    let mut x = obs.x_minus.clone();
    out.set(0, &x);
    for j in 0..grid.n_nodes() - 1 {
        let (s0, s1) = (s.at(j), s.at(j + 1));
        let sm = hermite_mid(h, s0, s1, &c.riccati(s0), &c.riccati(s1));
        let ydot = (y_path.at(j + 1) - y_path.at(j)) / h;
        let k1 = c.filter(s0, &x, &ydot);
        let k2 = c.filter(&sm, &(&x + &k1 * (h * half)), &ydot);
        let k3 = c.filter(&sm, &(&x + &k2 * (h * half)), &ydot);
        let k4 = c.filter(s1, &(&x + &k3 * h), &ydot);
        x += (k1 + k2 * two + k3 * two + k4) * (h * sixth);
        out.set(j + 1, &x);
    }
    Ok(out)
}

/// Backward smoothing sweep from `Xt(1) = Xh(1)`. Needs the observation
/// path to reconstruct `Xh` between nodes.
pub fn smooth_backward<T: Real>(
    obs: &ObservationModel<T>,
    s: &RiccatiSolution<T>,
    xhat: &Path<T>,
    y_path: &Path<T>,
) -> Result<Path<T>> {
    check_grid(s, xhat, "filter path")?;
    check_grid(s, y_path, "observation path")?;
    let c = Coefficients::new(obs)?;
    let grid = s.grid;
    let n = grid.n_nodes();
    let h: T = grid.spacing();
    let half: T = lit(0.5);
    let sixth: T = lit(1.0 / 6.0);
    let two: T = lit(2.0);
    let chol = |m: &DMatrix<T>, j: usize| {
        Cholesky::new(m.clone()).ok_or_else(|| Error::Singular(format!("Riccati solution near node {j}")))
    };
    let rhs = |ch: &Cholesky<T, nalgebra::Dyn>, xt: &DVector<T>, xh: &DVector<T>| -> DVector<T> {
        &c.a * xt + &c.q * ch.solve(&(xt - xh))
    };
    let mut out = Path::zeros(grid, obs.dim_x());
    let mut x = xhat.at(n - 1);
    out.set(n - 1, &x);
    let mut ch1 = chol(s.at(n - 1), n - 1)?;
    for j in (0..n - 1).rev() {
        let (s0, s1) = (s.at(j), s.at(j + 1));
        let (xh0, xh1) = (xhat.at(j), xhat.at(j + 1));
        let ydot = (y_path.at(j + 1) - y_path.at(j)) / h;
        let sm = hermite_mid(h, s0, s1, &c.riccati(s0), &c.riccati(s1));
        let xhm = hermite_mid_vec(h, &xh0, &xh1, &c.filter(s0, &xh0, &ydot), &c.filter(s1, &xh1, &ydot));
        let chm = chol(&sm, j)?;
        let ch0 = chol(s0, j)?;
        // integrate in reversed time from u_{j+1} to u_j
        let k1 = rhs(&ch1, &x, &xh1);
        let k2 = rhs(&chm, &(&x - &k1 * (h * half)), &xhm);
        let k3 = rhs(&chm, &(&x - &k2 * (h * half)), &xhm);
        let k4 = rhs(&ch0, &(&x - &k3 * h), &xh0);
        x -= (k1 + k2 * two + k3 * two + k4) * (h * sixth);
        out.set(j, &x);
        ch1 = ch0;
    }
    Ok(out)
}

/// One-sided residuals of the smoothing BVP's boundary rows,
/// `x'(0) = A11 x(0) + B11 B11^* Lambda^{-1} (x(0) - x^-)` and
/// `x'(1) = A11 x(1)`, as max-abs norms. Both are `O(h)` for the sweep.
pub fn smoother_boundary_residuals<T: Real>(
    obs: &ObservationModel<T>,
    s: &RiccatiSolution<T>,
    xtilde: &Path<T>,
) -> Result<(T, T)> {
    check_grid(s, xtilde, "smoother path")?;
    let grid = s.grid;
    let n = grid.n_nodes();
    let h: T = grid.spacing();
    let q = &obs.b11 * obs.b11.transpose();
    let lambda_inv = invert_spd(&obs.lambda, "lambda")?;
    let (x0, x1) = (xtilde.at(0), xtilde.at(1));
    let left = (&x1 - &x0) / h - &obs.a11 * &x0 - q * lambda_inv * (&x0 - &obs.x_minus);
    let (xa, xb) = (xtilde.at(n - 2), xtilde.at(n - 1));
    let right = (&xb - &xa) / h - &obs.a11 * &xb;
    Ok((left.amax(), right.amax()))
}
