//! Dense linear-algebra helpers: SVD pseudoinverse, guarded SPD solves,
//! cosine similarity.

use alloc::vec;

use nalgebra::linalg::{Cholesky, SVD};
use nalgebra::Dyn;

use crate::math::sqrt;
use crate::{Error, Matrix, Result, Vector};

/// Relative singular-value cutoff used by [`pseudo_inverse`].
pub const DEFAULT_RCOND: f64 = 1e-10;

/// Largest accepted condition number of an SPD system before it is treated as
/// rank deficient.
pub const MAX_CONDITION: f64 = 1e12;

const SVD_MAX_ITER: usize = 10_000;
const COND_ITERS: usize = 20;

/// Squared Frobenius norm.
pub fn frobenius_sq(m: &Matrix) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// Cosine similarity of two equally long slices. Zero vectors give 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (sqrt(na) * sqrt(nb))).clamp(-1.0, 1.0)
}

/// Moore–Penrose pseudoinverse via SVD. Singular values at or below
/// `rcond * sigma_max` are treated as zero.
pub fn pseudo_inverse(m: &Matrix, rcond: f64) -> Result<Matrix> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(Matrix::zeros(cols, rows));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "matrix",
            reason: "entries must be finite",
        });
    }
    let svd = SVD::<f64, Dyn, Dyn>::try_new(m.clone(), true, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or(Error::SvdNonConvergence)?;
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::SvdNonConvergence),
    };
    let sigma = svd.singular_values;
    let sigma_max = sigma.iter().cloned().fold(0.0, f64::max);
    let cutoff = rcond * sigma_max;
    // pinv = V diag(1/s) U^T, keeping only significant singular values.
    let mut v_scaled = v_t.transpose();
    for (j, &s) in sigma.iter().enumerate() {
        let inv = if s > cutoff { 1.0 / s } else { 0.0 };
        v_scaled.column_mut(j).scale_mut(inv);
    }
    Ok(v_scaled * u.transpose())
}

/// Numerical rank: number of singular values above `rcond * sigma_max`.
pub fn numerical_rank(m: &Matrix, rcond: f64) -> Result<usize> {
    if m.is_empty() {
        return Ok(0);
    }
    let sigma = m
        .clone()
        .try_svd(false, false, f64::EPSILON, SVD_MAX_ITER)
        .ok_or(Error::SvdNonConvergence)?
        .singular_values;
    let sigma_max = sigma.iter().cloned().fold(0.0, f64::max);
    Ok(sigma.iter().filter(|&&s| s > rcond * sigma_max).count())
}

/// Cholesky factorization of a symmetric positive-definite matrix together
/// with an estimate of its 2-norm condition number.
///
/// Construction fails with [`Error::RankDeficient`] when the factorization
/// breaks down or the estimated condition number exceeds the cap. No jitter
/// is ever added.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    condition: f64,
}

impl SpdFactor {
    pub fn new(gram: Matrix, max_condition: f64) -> Result<Self> {
        let n = gram.nrows();
        if n != gram.ncols() {
            return Err(Error::Dimension {
                context: "spd factor",
                expected: (n, n),
                got: gram.shape(),
            });
        }
        if gram.iter().any(|v| !v.is_finite()) {
            return Err(Error::RankDeficient {
                condition: f64::INFINITY,
            });
        }
        let lambda_max = largest_eigenvalue(&gram);
        let chol = Cholesky::new(gram).ok_or(Error::RankDeficient {
            condition: f64::INFINITY,
        })?;
        let lambda_min = smallest_eigenvalue(&chol, n);
        let condition = if lambda_min > 0.0 {
            lambda_max / lambda_min
        } else {
            f64::INFINITY
        };
        if !(condition <= max_condition) {
            return Err(Error::RankDeficient { condition });
        }
        Ok(Self { chol, condition })
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// Solves `G X = B`.
    pub fn solve(&self, rhs: &Matrix) -> Matrix {
        self.chol.solve(rhs)
    }

    pub fn solve_vec(&self, rhs: &Vector) -> Vector {
        self.chol.solve(rhs)
    }

    /// Explicit inverse `G^{-1}`.
    pub fn inverse(&self) -> Matrix {
        self.chol.inverse()
    }
}

/// Power iteration for the largest eigenvalue of a symmetric PSD matrix.
fn largest_eigenvalue(g: &Matrix) -> f64 {
    let n = g.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = Vector::from_vec(vec![1.0 / sqrt(n as f64); n]);
    let mut estimate = 0.0;
    for _ in 0..COND_ITERS {
        let w = g * &v;
        let norm = w.norm();
        if norm == 0.0 || !norm.is_finite() {
            return norm;
        }
        estimate = v.dot(&w);
        v = w / norm;
    }
    // Rayleigh quotient of the final iterate
    estimate.max((g * &v).dot(&v))
}

/// Inverse iteration (through the Cholesky factor) for the smallest
/// eigenvalue.
fn smallest_eigenvalue(chol: &Cholesky<f64, Dyn>, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    // An alternating start vector avoids being orthogonal to the bottom
    // eigenvector of all-positive Gram matrices.
    let mut v = Vector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { -0.5 });
    let norm = v.norm();
    v /= norm;
    let mut inv_estimate = 0.0;
    for _ in 0..COND_ITERS {
        let w = chol.solve(&v);
        let norm = w.norm();
        if !norm.is_finite() {
            return 0.0;
        }
        inv_estimate = v.dot(&w);
        v = w / norm;
    }
    let inv_estimate = inv_estimate.max(chol.solve(&v).dot(&v));
    if inv_estimate > 0.0 {
        1.0 / inv_estimate
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: &Matrix, b: &Matrix) -> f64 {
        (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn pinv_of_identity_is_identity() {
        let i = Matrix::identity(4, 4);
        let p = pseudo_inverse(&i, DEFAULT_RCOND).unwrap();
        assert!(rel(&p, &i) < 1e-14);
    }

    #[test]
    fn pinv_of_orthonormal_rows_is_transpose() {
        let j = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let p = pseudo_inverse(&j, DEFAULT_RCOND).unwrap();
        assert!(rel(&p, &j.transpose()) < 1e-14);
    }

    #[test]
    fn pinv_drops_tiny_singular_values() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-14]);
        let p = pseudo_inverse(&m, DEFAULT_RCOND).unwrap();
        assert_eq!(p[(1, 1)], 0.0);
        assert_eq!(numerical_rank(&m, DEFAULT_RCOND).unwrap(), 1);
    }

    #[test]
    fn pinv_rejects_non_finite() {
        let m = Matrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        assert!(pseudo_inverse(&m, DEFAULT_RCOND).is_err());
    }

    #[test]
    fn cosine_conventions() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
        assert!((cosine(&[1.0, 1.0], &[2.0, 2.0]) - 1.0).abs() < 1e-15);
        assert!((cosine(&[1.0, 0.0], &[0.0, 3.0])).abs() < 1e-15);
    }

    #[test]
    fn spd_condition_estimate_is_close_for_diagonal() {
        let g = Matrix::from_diagonal(&Vector::from_vec(vec![4.0, 2.0, 1.0, 0.5]));
        let f = SpdFactor::new(g.clone(), MAX_CONDITION).unwrap();
        assert!((f.condition() - 8.0).abs() < 1e-6, "{}", f.condition());
        let a = f.inverse();
        assert!((&g * &a - Matrix::identity(4, 4)).norm() < 1e-12);
    }

    #[test]
    fn spd_rejects_singular_and_ill_conditioned() {
        let singular = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            SpdFactor::new(singular, MAX_CONDITION),
            Err(Error::RankDeficient { .. })
        ));
        let ill = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 1e-13]));
        assert!(matches!(
            SpdFactor::new(ill, MAX_CONDITION),
            Err(Error::RankDeficient { .. })
        ));
    }
}
