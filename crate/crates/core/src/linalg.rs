//! Dense and block-banded linear algebra helpers shared by the modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen, LU};

use crate::{lit, Error, Real, Result};

pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * lit::<T>(0.5)
}

pub fn max_abs<T: Real>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

pub fn max_abs_vec<T: Real>(v: &DVector<T>) -> T {
    v.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

/// Max-abs asymmetry `max |M - M^T|`.
pub fn asymmetry<T: Real>(m: &DMatrix<T>) -> T {
    max_abs(&(m - m.transpose()))
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    let eig = SymmetricEigen::new(symmetrize(m));
    eig.eigenvalues.iter().fold(T::max_value().unwrap(), |a, &b| a.min(b))
}

/// Solve `m x = b` by LU with partial pivoting.
pub fn lu_solve<T: Real>(m: &DMatrix<T>, b: &DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    LU::new(m.clone())
        .solve(b)
        .ok_or_else(|| Error::Singular(what.to_string()))
}

/// Symmetrically pivoted Cholesky factorization `C ~ F F^T` of a positive
/// semidefinite matrix, truncated once the largest remaining pivot drops
/// below `rel_tol` times the largest diagonal entry.
#[derive(Debug, Clone)]
pub struct PivotedCholesky<T: Real> {
    /// `n x rank` factor, rows in the original ordering.
    pub factor: DMatrix<T>,
    /// Indices selected as pivots, in pivot order.
    pub kept: Vec<usize>,
}

/// Negative pivots below `-PSD_TOL * max diag` mean the input is indefinite.
pub const PSD_TOL: f64 = 1e-8;

impl<T: Real> PivotedCholesky<T> {
    pub fn new(c: &DMatrix<T>, rel_tol: f64) -> Result<Self> {
        let n = c.nrows();
        if c.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "pivoted Cholesky (square)",
                expected: n,
                got: c.ncols(),
            });
        }
        let mut diag: Vec<T> = (0..n).map(|i| c[(i, i)]).collect();
        let scale = diag.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
        let mut factor = DMatrix::<T>::zeros(n, n);
        let mut kept = Vec::new();
        let mut used = vec![false; n];
        if scale == T::zero() {
            return Ok(Self {
                factor: DMatrix::zeros(n, 0),
                kept,
            });
        }
        let cutoff = scale * lit(rel_tol);
        let neg = -scale * lit(PSD_TOL);
        for k in 0..n {
            let mut best = None;
            let mut best_val = T::zero();
            for i in 0..n {
                if used[i] {
                    continue;
                }
                if diag[i] < neg {
                    return Err(Error::NotPositiveDefinite(format!(
                        "pivot {} of {} is {} (scale {})",
                        k, n, diag[i], scale
                    )));
                }
                if best.is_none() || diag[i] > best_val {
                    best = Some(i);
                    best_val = diag[i];
                }
            }
            let Some(p) = best else { break };
            if best_val <= cutoff {
                break;
            }
            used[p] = true;
            kept.push(p);
            let piv = best_val.sqrt();
            factor[(p, k)] = piv;
            for i in 0..n {
                if used[i] {
                    continue;
                }
                let mut s = c[(i, p)];
                for j in 0..k {
                    s -= factor[(i, j)] * factor[(p, j)];
                }
                let l = s / piv;
                factor[(i, k)] = l;
                diag[i] -= l * l;
            }
        }
        let rank = kept.len();
        let factor = factor.columns(0, rank).into_owned();
        Ok(Self { factor, kept })
    }

    pub fn rank(&self) -> usize {
        self.kept.len()
    }

    /// `F z` for a standard normal `z` of length `rank` gives `N(0, C)`.
    pub fn apply(&self, z: &DVector<T>) -> DVector<T> {
        &self.factor * z
    }

    /// Generalized-inverse solve: `C_kk^{-1} b_k` on the pivot set, zero on
    /// the discarded directions.
    pub fn solve(&self, b: &DMatrix<T>) -> DMatrix<T> {
        let r = self.rank();
        let n = self.factor.nrows();
        // lower triangular in pivot order
        let mut lkk = DMatrix::<T>::zeros(r, r);
        for (a, &i) in self.kept.iter().enumerate() {
            for col in 0..=a {
                lkk[(a, col)] = self.factor[(i, col)];
            }
        }
        let mut rhs = DMatrix::<T>::zeros(r, b.ncols());
        for (a, &i) in self.kept.iter().enumerate() {
            rhs.row_mut(a).copy_from(&b.row(i));
        }
        let y = lkk
            .solve_lower_triangular(&rhs)
            .expect("positive pivots give nonsingular triangle");
        let z = lkk
            .transpose()
            .solve_upper_triangular(&y)
            .expect("positive pivots give nonsingular triangle");
        let mut out = DMatrix::<T>::zeros(n, b.ncols());
        for (a, &i) in self.kept.iter().enumerate() {
            out.row_mut(i).copy_from(&z.row(a));
        }
        out
    }

    pub fn solve_vec(&self, b: &DVector<T>) -> DVector<T> {
        let m = self.solve(&DMatrix::from_column_slice(b.len(), 1, b.as_slice()));
        DVector::from_column_slice(m.as_slice())
    }
}

/// Square block-tridiagonal matrix with `n` diagonal blocks of size `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiagonal<T: Real> {
    pub block: usize,
    /// `lower[i]` is block `(i + 1, i)`.
    pub lower: Vec<DMatrix<T>>,
    pub diag: Vec<DMatrix<T>>,
    /// `upper[i]` is block `(i, i + 1)`.
    pub upper: Vec<DMatrix<T>>,
}

impl<T: Real> BlockTridiagonal<T> {
    pub fn zeros(n: usize, block: usize) -> Self {
        let z = DMatrix::zeros(block, block);
        Self {
            block,
            lower: vec![z.clone(); n.saturating_sub(1)],
            diag: vec![z.clone(); n],
            upper: vec![z; n.saturating_sub(1)],
        }
    }

    pub fn identity(n: usize, block: usize) -> Self {
        let mut out = Self::zeros(n, block);
        for d in &mut out.diag {
            d.fill_with_identity();
        }
        out
    }

    pub fn n_blocks(&self) -> usize {
        self.diag.len()
    }

    pub fn dim(&self) -> usize {
        self.n_blocks() * self.block
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let d = self.block;
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for (i, b) in self.diag.iter().enumerate() {
            m.view_mut((i * d, i * d), (d, d)).copy_from(b);
        }
        for (i, b) in self.lower.iter().enumerate() {
            m.view_mut(((i + 1) * d, i * d), (d, d)).copy_from(b);
        }
        for (i, b) in self.upper.iter().enumerate() {
            m.view_mut((i * d, (i + 1) * d), (d, d)).copy_from(b);
        }
        m
    }

    pub fn mul_vec(&self, x: &DVector<T>) -> DVector<T> {
        let d = self.block;
        let n = self.n_blocks();
        let mut y = DVector::zeros(self.dim());
        for i in 0..n {
            let o = i * d;
            gemv_add(&mut y, o, &self.diag[i], x, o);
            if i > 0 {
                gemv_add(&mut y, o, &self.lower[i - 1], x, o - d);
            }
            if i + 1 < n {
                gemv_add(&mut y, o, &self.upper[i], x, o + d);
            }
        }
        y
    }

    pub fn mul_mat(&self, x: &DMatrix<T>) -> DMatrix<T> {
        let d = self.block;
        let n = self.n_blocks();
        let mut y = DMatrix::zeros(self.dim(), x.ncols());
        for i in 0..n {
            let mut acc = &self.diag[i] * x.rows(i * d, d);
            if i > 0 {
                acc += &self.lower[i - 1] * x.rows((i - 1) * d, d);
            }
            if i + 1 < n {
                acc += &self.upper[i] * x.rows((i + 1) * d, d);
            }
            y.rows_mut(i * d, d).copy_from(&acc);
        }
        y
    }

    /// `alpha * self + beta * I`.
    pub fn scale_shift(&self, alpha: T, beta: T) -> Self {
        let mut out = self.clone();
        for b in out.lower.iter_mut().chain(out.upper.iter_mut()) {
            *b *= alpha;
        }
        for b in &mut out.diag {
            *b *= alpha;
            for k in 0..self.block {
                b[(k, k)] += beta;
            }
        }
        out
    }

    /// Principal sub-matrix over the contiguous block range `start..end`.
    pub fn sub_range(&self, start: usize, end: usize) -> Self {
        Self {
            block: self.block,
            lower: self.lower[start..end - 1].to_vec(),
            diag: self.diag[start..end].to_vec(),
            upper: self.upper[start..end - 1].to_vec(),
        }
    }

    /// Block LU (block Thomas) factorization.
    pub fn factor(&self) -> Result<BlockTridiagonalLu<T>> {
        let n = self.n_blocks();
        let mut pinv: Vec<DMatrix<T>> = Vec::with_capacity(n);
        let mut w: Vec<DMatrix<T>> = Vec::with_capacity(n.saturating_sub(1));
        for i in 0..n {
            let mut d = self.diag[i].clone();
            if i > 0 {
                d -= &self.lower[i - 1] * &w[i - 1];
            }
            let lu = LU::new(d);
            let inv = lu
                .try_inverse()
                .filter(|m| m.iter().all(|v| v.is_finite()))
                .ok_or_else(|| Error::Singular(format!("block pivot {i} of block-tridiagonal system")))?;
            if i + 1 < n {
                w.push(&inv * &self.upper[i]);
            }
            pinv.push(inv);
        }
        Ok(BlockTridiagonalLu {
            block: self.block,
            lower: self.lower.clone(),
            pinv,
            w,
        })
    }

    pub fn solve(&self, b: &DVector<T>) -> Result<DVector<T>> {
        Ok(self.factor()?.solve(b))
    }
}

/// `y[yo..yo+d] += m * x[xo..xo+d]` for a `d x d` block.
#[inline]
fn gemv_add<T: Real>(y: &mut DVector<T>, yo: usize, m: &DMatrix<T>, x: &DVector<T>, xo: usize) {
    let d = m.nrows();
    for c in 0..d {
        let xc = x[xo + c];
        for r in 0..d {
            y[yo + r] += m[(r, c)] * xc;
        }
    }
}

/// Cached block LU factors (inverted pivots); `solve` is `O(n d^2)`.
#[derive(Debug, Clone)]
pub struct BlockTridiagonalLu<T: Real> {
    block: usize,
    lower: Vec<DMatrix<T>>,
    pinv: Vec<DMatrix<T>>,
    w: Vec<DMatrix<T>>,
}

impl<T: Real> BlockTridiagonalLu<T> {
    pub fn solve(&self, b: &DVector<T>) -> DVector<T> {
        let d = self.block;
        let n = self.pinv.len();
        let mut x = DVector::zeros(n * d);
        let mut r = DVector::zeros(n * d);
        for i in 0..n {
            let o = i * d;
            for a in 0..d {
                r[o + a] = b[o + a];
            }
            if i > 0 {
                // r_i -= L_{i-1} y_{i-1}
                let l = &self.lower[i - 1];
                for c in 0..d {
                    let yc = x[o - d + c];
                    for a in 0..d {
                        r[o + a] -= l[(a, c)] * yc;
                    }
                }
            }
            gemv_add(&mut x, o, &self.pinv[i], &r, o);
        }
        for i in (0..n.saturating_sub(1)).rev() {
            let o = i * d;
            let w = &self.w[i];
            for c in 0..d {
                let xc = x[o + d + c];
                for a in 0..d {
                    x[o + a] -= w[(a, c)] * xc;
                }
            }
        }
        x
    }
}
