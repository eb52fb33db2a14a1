use nalgebra::{DMatrix, DVector};

use crate::model::Path;
use crate::{lit, Error, Real, Result};

/// Sample covariance block between two nodes with entrywise standard errors.
#[derive(Debug, Clone)]
pub struct PairCovariance<T: Real> {
    pub nodes: (usize, usize),
    pub cov: DMatrix<T>,
    pub stderr: DMatrix<T>,
}

/// Monte Carlo summary of an ensemble of paths.
#[derive(Debug, Clone)]
pub struct EmpiricalStats<T: Real> {
    pub count: usize,
    pub mean: Path<T>,
    pub mean_stderr: Path<T>,
    /// Per-node, per-component sample variance (divisor `N - 1`).
    pub variance: Path<T>,
    pub variance_stderr: Path<T>,
    pub pairs: Vec<PairCovariance<T>>,
}

/// Sample mean, variances and the covariance blocks at `pairs`.
///
/// Standard errors of second moments are `sd(z) / sqrt(N)` with
/// `z = (x - xbar)(y - ybar)`.
pub fn empirical_stats<T: Real>(paths: &[Path<T>], pairs: &[(usize, usize)]) -> Result<EmpiricalStats<T>> {
    if paths.len() < 2 {
        return Err(Error::invalid("paths", "need at least two paths"));
    }
    let grid = paths[0].grid();
    let dim = paths[0].dim();
    if paths.iter().any(|p| p.grid() != grid || p.dim() != dim) {
        return Err(Error::GridMismatch("ensemble paths live on different grids".into()));
    }
    let n = grid.n_nodes();
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= n || j >= n) {
        return Err(Error::invalid("pairs", format!("node pair ({i}, {j}) outside grid of {n} nodes")));
    }
    let count = paths.len();
    let nf: T = lit(count as f64);
    let len = n * dim;
    let mut mean = DVector::<T>::zeros(len);
    for p in paths {
        mean += p.as_vector();
    }
    mean /= nf;
    let mut m2 = DVector::<T>::zeros(len);
    let mut m4 = DVector::<T>::zeros(len);
    for p in paths {
        let dev = p.as_vector() - &mean;
        for k in 0..len {
            let s = dev[k] * dev[k];
            m2[k] += s;
            m4[k] += s * s;
        }
    }
    let dof = nf - T::one();
    let variance = m2.map(|s| s / dof);
    let mean_stderr = variance.map(|v| (v / nf).sqrt());
    // var(z) with z = dev^2, mean(z) = m2 / N
    let variance_stderr = DVector::from_fn(len, |k, _| {
        let mz = m2[k] / nf;
        let vz = (m4[k] - nf * mz * mz) / dof;
        (vz.max(T::zero()) / nf).sqrt()
    });
    let mut out_pairs = Vec::with_capacity(pairs.len());
    for &(a, b) in pairs {
        let mut sum = DMatrix::<T>::zeros(dim, dim);
        let mut sum_sq = DMatrix::<T>::zeros(dim, dim);
        for p in paths {
            for r in 0..dim {
                for c in 0..dim {
                    let z = (p.get(a, r) - mean[a * dim + r]) * (p.get(b, c) - mean[b * dim + c]);
                    sum[(r, c)] += z;
                    sum_sq[(r, c)] += z * z;
                }
            }
        }
        let cov = &sum / dof;
        let stderr = DMatrix::from_fn(dim, dim, |r, c| {
            let mz = sum[(r, c)] / nf;
            let vz = (sum_sq[(r, c)] - nf * mz * mz) / dof;
            (vz.max(T::zero()) / nf).sqrt()
        });
        out_pairs.push(PairCovariance { nodes: (a, b), cov, stderr });
    }
    let wrap = |v: DVector<T>| Path::new(grid, dim, v).expect("length matches grid");
    Ok(EmpiricalStats {
        count,
        mean: wrap(mean),
        mean_stderr: wrap(mean_stderr),
        variance: wrap(variance),
        variance_stderr: wrap(variance_stderr),
        pairs: out_pairs,
    })
}
