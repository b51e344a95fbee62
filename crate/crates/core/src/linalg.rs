//! Small dense linear-algebra helpers over `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solve `a x = b` for a symmetric matrix that should be positive definite.
///
/// Cholesky first. When it fails, `ridge` decides the outcome: with a positive
/// ridge the matrix was PD by construction, so failure means non-finite input;
/// with zero ridge the system is checked for rank deficiency and solved by
/// pseudo-inverse only if it is numerically nonsingular.
pub fn solve_spd(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    ridge: f64,
    what: &str,
) -> Result<DVector<f64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return Err(Error::Dimension(format!(
            "{what}: system is {}x{} with rhs of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    if !a.iter().chain(b.iter()).all(|v| v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "{what}: system contains non-finite entries"
        )));
    }
    if let Some(chol) = a.clone().cholesky() {
        let x = chol.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return Ok(x);
        }
    }
    if ridge > 0.0 {
        return Err(Error::Singular(format!(
            "{what}: factorization failed despite positive regularization {ridge}"
        )));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let tol = f64::EPSILON * a.nrows() as f64 * smax;
    if smax == 0.0 || smin <= tol {
        return Err(Error::Singular(format!(
            "{what}: matrix is singular without regularization; use a positive regularization parameter"
        )));
    }
    svd.solve(b, tol)
        .map_err(|e| Error::Singular(format!("{what}: {e}")))
}

/// `Xᵀ diag(w) X` for an n × b matrix and n weights.
pub fn weighted_gram(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = x.clone();
    for (mut row, wi) in scaled.row_iter_mut().zip(w.iter()) {
        row *= *wi;
    }
    x.transpose() * scaled
}

/// Column means of a matrix, as a vector of length ncols.
pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows().max(1) as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Rows of `x` selected by `idx`, in order.
pub fn select_rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    x.select_rows(idx)
}

pub fn select_entries(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let x = solve_spd(&a, &b, 0.0, "t").unwrap();
        assert!(((&a * &x) - &b).amax() < 1e-12);
    }

    #[test]
    fn singular_without_ridge_is_an_error() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let err = solve_spd(&a, &b, 0.0, "t").unwrap_err();
        assert!(err.to_string().contains("regularization"));
    }

    #[test]
    fn weighted_gram_matches_explicit() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let w = DVector::from_vec(vec![1.0, 0.5, 2.0]);
        let explicit = x.transpose() * DMatrix::from_diagonal(&w) * &x;
        assert!((weighted_gram(&x, &w) - explicit).amax() < 1e-12);
    }
}
