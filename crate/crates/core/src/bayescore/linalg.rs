//! Dense row-major helpers generic over [`Scalar`], so factorizations can be
//! differentiated like any other computation.

use crate::diffnet::Scalar;
use crate::error::{Error, Result};

/// Lower Cholesky factor of a symmetric matrix, or `None` if a pivot is not
/// strictly positive.
pub fn cholesky<S: Scalar>(a: &[S], d: usize) -> Option<Vec<S>> {
    debug_assert_eq!(a.len(), d * d);
    let mut l = vec![S::zero(); d * d];
    for j in 0..d {
        let row_j = &l[j * d..j * d + j];
        let pivot = a[j * d + j] - S::dot(row_j, row_j);
        let p = pivot.primal();
        if !(p > 0.0) || !p.is_finite() {
            return None;
        }
        let ljj = pivot.sqrt();
        l[j * d + j] = ljj;
        for i in j + 1..d {
            let s = S::dot(&l[i * d..i * d + j], &l[j * d..j * d + j]);
            l[i * d + j] = (a[i * d + j] - s) / ljj;
        }
    }
    Some(l)
}

/// Cholesky with the one-shot jitter policy: on failure add
/// `1e-9·tr(M)/d·I` and retry once. Returns the factor and whether jitter was
/// needed.
pub fn cholesky_jittered<S: Scalar>(
    a: &[S],
    d: usize,
    what: &'static str,
) -> Result<(Vec<S>, bool)> {
    if let Some(l) = cholesky(a, d) {
        return Ok((l, false));
    }
    let trace: f64 = (0..d).map(|i| a[i * d + i].primal()).sum();
    let jitter = 1e-9 * trace.abs().max(f64::MIN_POSITIVE) / d as f64;
    let mut shifted = a.to_vec();
    for i in 0..d {
        shifted[i * d + i] = shifted[i * d + i] + jitter;
    }
    cholesky(&shifted, d)
        .map(|l| (l, true))
        .ok_or(Error::NotPositiveDefinite(what))
}

/// Solve `L y = b` for lower-triangular `L`.
pub fn forward_solve<S: Scalar>(l: &[S], b: &[S], d: usize) -> Vec<S> {
    let mut y: Vec<S> = Vec::with_capacity(d);
    for i in 0..d {
        let s = S::dot(&l[i * d..i * d + i], &y[..i]);
        y.push((b[i] - s) / l[i * d + i]);
    }
    y
}

/// Solve `Lᵀ x = y` for lower-triangular `L`.
pub fn backward_solve<S: Scalar>(l: &[S], y: &[S], d: usize) -> Vec<S> {
    let mut x = vec![S::zero(); d];
    for i in (0..d).rev() {
        let mut s = S::zero();
        for k in i + 1..d {
            s = s + l[k * d + i] * x[k];
        }
        x[i] = (y[i] - s) / l[i * d + i];
    }
    x
}

/// `log det(L Lᵀ) = 2 Σ log L_ii`.
pub fn log_det_from_cholesky<S: Scalar>(l: &[S], d: usize) -> S {
    let logs: Vec<S> = (0..d).map(|i| l[i * d + i].ln()).collect();
    S::sum(&logs) * 2.0
}

/// Neumaier-compensated sum in the given order.
pub fn compensated_sum<S: Scalar>(terms: impl IntoIterator<Item = S>) -> S {
    let mut sum = S::zero();
    let mut comp = S::zero();
    for t in terms {
        let next = sum + t;
        if sum.primal().abs() >= t.primal().abs() {
            comp = comp + ((sum - next) + t);
        } else {
            comp = comp + ((t - next) + sum);
        }
        sum = next;
    }
    sum + comp
}

pub fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(a: &[f64], d: usize) -> Vec<f64> {
    let m = nalgebra::DMatrix::from_row_slice(d, d, a);
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Inverse of `L Lᵀ` from its Cholesky factor, by triangular solves.
pub fn inverse_from_cholesky(l: &[f64], d: usize) -> Vec<f64> {
    let mut inv = vec![0.0; d * d];
    for j in 0..d {
        let mut e = vec![0.0; d];
        e[j] = 1.0;
        let y = forward_solve(l, &e, d);
        let x = backward_solve(l, &y, d);
        for i in 0..d {
            inv[i * d + j] = x[i];
        }
    }
    inv
}
