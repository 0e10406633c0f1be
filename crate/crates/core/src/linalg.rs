use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solves `(A + ridge * I) x = b` for symmetric positive (semi)definite `A`.
///
/// Cholesky first; if roundoff makes the factorization fail, falls back to LU.
pub(crate) fn solve_ridge(a: &DMatrix<f64>, b: &DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut m = a.clone();
    for i in 0..n {
        m[(i, i)] += ridge;
    }
    if let Some(ch) = m.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    m.lu()
        .solve(b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Solver(format!("singular {n}x{n} system (ridge {ridge:e})")))
}

pub(crate) fn solve_ridge_vec(a: &DMatrix<f64>, b: &[f64], ridge: f64) -> Result<Vec<f64>> {
    let rhs = DMatrix::from_column_slice(b.len(), 1, b);
    Ok(solve_ridge(a, &rhs, ridge)?.column(0).iter().copied().collect())
}

/// `x^T A x` for a symmetric matrix.
pub(crate) fn quad_form(a: &DMatrix<f64>, x: &[f64]) -> f64 {
    let v = DVector::from_column_slice(x);
    v.dot(&(a * &v))
}

/// Ratio of extreme eigenvalue magnitudes of a symmetric matrix.
pub(crate) fn condition_number(a: &DMatrix<f64>) -> f64 {
    let eig = a.clone().symmetric_eigen();
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e.abs()), hi.max(e.abs())));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}
