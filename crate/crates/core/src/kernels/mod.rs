//! Analytic means and covariance kernels of the conditioned path measures.
//!
//! With `m(u) = e^{uA} x^-` and the fixed-left kernel
//! `C0(u, v) = e^{uA} G(u ^ v) e^{vA^*}`:
//!
//! * Gaussian left end: `C(u, v) = e^{uA} Sigma e^{vA^*} + C0(u, v)`.
//! * Bridge: `C(u, v) = C0(u, v) - C0(u, 1) C0(1, 1)^{-1} C0(1, v)` and
//!   `m(u) + C0(u, 1) C0(1, 1)^{-1} (x^+ - m(1))`.
//!
//! Kernels are callables; [`GaussKernel::gram`] assembles node values for
//! consumers that need a matrix.

mod empirical;

pub use empirical::{empirical_stats, EmpiricalStats, PairCovariance};

use nalgebra::{DMatrix, DVector, LU};

use crate::model::{check_spd, gram_integral, matrix_exp, Grid, LinearSdeModel, Path};
use crate::{Error, Real, Result};

#[derive(Debug, Clone)]
enum Kind<T: Real> {
    FixedLeft,
    GaussianLeft {
        sigma: DMatrix<T>,
    },
    Bridge {
        x_plus: DVector<T>,
        /// `C0(1, 1)^{-1} (x^+ - m(1))`
        gain_target: DVector<T>,
        c11_lu: LU<T, nalgebra::Dyn, nalgebra::Dyn>,
    },
}

/// Mean function and covariance kernel of a Gaussian path measure.
#[derive(Debug, Clone)]
pub struct GaussKernel<T: Real> {
    model: LinearSdeModel<T>,
    x_minus: DVector<T>,
    kind: Kind<T>,
}

fn check_x<T: Real>(model: &LinearSdeModel<T>, x: &DVector<T>, context: &'static str) -> Result<()> {
    model.check_shapes()?;
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            context,
            expected: model.dim(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Law of the SDE started at `X(0) = x_minus`.
pub fn kernel_fixed_left<T: Real>(model: &LinearSdeModel<T>, x_minus: &DVector<T>) -> Result<GaussKernel<T>> {
    check_x(model, x_minus, "x_minus")?;
    Ok(GaussKernel {
        model: model.clone(),
        x_minus: x_minus.clone(),
        kind: Kind::FixedLeft,
    })
}

/// Law of the SDE started at `X(0) ~ N(x_minus, sigma)`.
pub fn kernel_gaussian_left<T: Real>(
    model: &LinearSdeModel<T>,
    x_minus: &DVector<T>,
    sigma: &DMatrix<T>,
) -> Result<GaussKernel<T>> {
    check_x(model, x_minus, "x_minus")?;
    if sigma.shape() != (model.dim(), model.dim()) {
        return Err(Error::invalid("sigma", "shape must match the model dimension"));
    }
    check_spd(sigma, "sigma")?;
    Ok(GaussKernel {
        model: model.clone(),
        x_minus: x_minus.clone(),
        kind: Kind::GaussianLeft { sigma: sigma.clone() },
    })
}

/// Law of the SDE pinned at `X(0) = x_minus` and `X(1) = x_plus`.
pub fn kernel_bridge<T: Real>(
    model: &LinearSdeModel<T>,
    x_minus: &DVector<T>,
    x_plus: &DVector<T>,
) -> Result<GaussKernel<T>> {
    check_x(model, x_minus, "x_minus")?;
    check_x(model, x_plus, "x_plus")?;
    let one = T::one();
    let c11 = fixed_left_cov(model, one, one)?;
    let lu = LU::new(c11);
    if !lu.is_invertible() {
        return Err(Error::Singular("C0(1, 1) of the bridge".into()));
    }
    let m1 = matrix_exp(&model.drift, one) * x_minus;
    let gain_target = lu
        .solve(&(x_plus - m1))
        .ok_or_else(|| Error::Singular("C0(1, 1) of the bridge".into()))?;
    Ok(GaussKernel {
        model: model.clone(),
        x_minus: x_minus.clone(),
        kind: Kind::Bridge {
            x_plus: x_plus.clone(),
            gain_target,
            c11_lu: lu,
        },
    })
}

/// `C0(u, v)`, the covariance of the SDE started at a fixed point.
pub fn fixed_left_cov<T: Real>(model: &LinearSdeModel<T>, u: T, v: T) -> Result<DMatrix<T>> {
    let g = gram_integral(model, u.min(v))?;
    let eu = matrix_exp(&model.drift, u);
    let ev = matrix_exp(&model.drift, v);
    Ok(eu * g * ev.transpose())
}

fn check_unit<T: Real>(u: T) {
    assert!(u >= T::zero() && u <= T::one(), "kernel argument {u} outside [0, 1]");
}

impl<T: Real> GaussKernel<T> {
    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn model(&self) -> &LinearSdeModel<T> {
        &self.model
    }

    /// `"fixed_left"`, `"gaussian_left"` or `"bridge"`.
    pub fn tag(&self) -> &'static str {
        match self.kind {
            Kind::FixedLeft => "fixed_left",
            Kind::GaussianLeft { .. } => "gaussian_left",
            Kind::Bridge { .. } => "bridge",
        }
    }

    fn prior_mean(&self, u: T) -> DVector<T> {
        matrix_exp(&self.model.drift, u) * &self.x_minus
    }

    /// Mean `m(u)`; panics for `u` outside `[0, 1]`.
    pub fn mean(&self, u: T) -> DVector<T> {
        check_unit(u);
        match &self.kind {
            Kind::FixedLeft | Kind::GaussianLeft { .. } => self.prior_mean(u),
            Kind::Bridge {
                x_plus, gain_target, ..
            } => {
                if u == T::one() {
                    return x_plus.clone();
                }
                let c_u1 = fixed_left_cov(&self.model, u, T::one()).expect("u checked");
                self.prior_mean(u) + c_u1 * gain_target
            }
        }
    }

    /// Covariance `C(u, v)`; panics for arguments outside `[0, 1]`.
    pub fn cov(&self, u: T, v: T) -> DMatrix<T> {
        check_unit(u);
        check_unit(v);
        let c0 = fixed_left_cov(&self.model, u, v).expect("arguments checked");
        match &self.kind {
            Kind::FixedLeft => c0,
            Kind::GaussianLeft { sigma } => {
                let eu = matrix_exp(&self.model.drift, u);
                let ev = matrix_exp(&self.model.drift, v);
                eu * sigma * ev.transpose() + c0
            }
            Kind::Bridge { c11_lu, .. } => {
                let d = self.dim();
                if u == T::one() || v == T::one() {
                    return DMatrix::zeros(d, d);
                }
                let one = T::one();
                let c_u1 = fixed_left_cov(&self.model, u, one).expect("checked");
                let c_1v = fixed_left_cov(&self.model, one, v).expect("checked");
                let w = c11_lu.solve(&c_1v).expect("C0(1,1) checked invertible");
                c0 - c_u1 * w
            }
        }
    }

    pub fn mean_path(&self, grid: Grid) -> Path<T> {
        Path::from_fn(grid, self.dim(), |u| self.mean(u))
    }

    /// Block matrix `[C(u_i, u_j)]` over the grid, node-major.
    ///
    /// Uses per-node caches of `e^{u_j A}` and `G(u_j)` instead of calling
    /// [`GaussKernel::cov`] for each pair.
    pub fn gram(&self, grid: Grid) -> DMatrix<T> {
        let d = self.dim();
        let n = grid.n_nodes();
        let nodes: Vec<T> = grid.nodes();
        let exps: Vec<DMatrix<T>> = nodes.iter().map(|&u| matrix_exp(&self.model.drift, u)).collect();
        let grams: Vec<DMatrix<T>> = nodes
            .iter()
            .map(|&u| gram_integral(&self.model, u).expect("grid nodes lie in [0, 1]"))
            .collect();
        // e^{u_j A} G(u_j)
        let left: Vec<DMatrix<T>> = exps.iter().zip(&grams).map(|(e, g)| e * g).collect();
        let c0 = |i: usize, j: usize| -> DMatrix<T> {
            if i <= j {
                &left[i] * exps[j].transpose()
            } else {
                &exps[i] * left[j].transpose()
            }
        };
        let mut out = DMatrix::zeros(n * d, n * d);
        let bridge_terms = match &self.kind {
            Kind::Bridge { c11_lu, .. } => {
                let last = n - 1;
                let gains: Vec<DMatrix<T>> = (0..n)
                    .map(|j| c11_lu.solve(&c0(last, j)).expect("checked invertible"))
                    .collect();
                Some((last, gains))
            }
            _ => None,
        };
        for i in 0..n {
            for j in i..n {
                let mut block = c0(i, j);
                match &self.kind {
                    Kind::FixedLeft => {}
                    Kind::GaussianLeft { sigma } => {
                        block += &exps[i] * sigma * exps[j].transpose();
                    }
                    Kind::Bridge { .. } => {
                        let (last, gains) = bridge_terms.as_ref().expect("bridge");
                        if i == *last || j == *last {
                            block.fill(T::zero());
                        } else {
                            block -= c0(i, *last) * &gains[j];
                        }
                    }
                }
                out.view_mut((i * d, j * d), (d, d)).copy_from(&block);
                if i != j {
                    out.view_mut((j * d, i * d), (d, d)).copy_from(&block.transpose());
                }
            }
        }
        out
    }
}
