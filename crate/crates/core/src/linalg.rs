use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub(crate) fn cholesky_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::invalid(format!("matrix is {}x{}, not square", m.nrows(), m.ncols())));
    }
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::invalid("matrix is not positive definite"))
}

pub(crate) fn log_det_from_factor(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Solves `(L L^T) x = b`.
pub(crate) fn chol_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let y = l.solve_lower_triangular(b).expect("factor has a positive diagonal");
    l.tr_solve_lower_triangular(&y).expect("factor has a positive diagonal")
}

pub(crate) fn chol_solve_mat(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let y = l.solve_lower_triangular(b).expect("factor has a positive diagonal");
    l.tr_solve_lower_triangular(&y).expect("factor has a positive diagonal")
}

pub(crate) fn chol_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    chol_solve_mat(l, &DMatrix::identity(n, n))
}

/// Inverse of an SPD matrix, re-symmetrized.
pub(crate) fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let l = cholesky_lower(m)?;
    Ok(symmetrize(&chol_inverse(&l)))
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn spd_log_det(m: &DMatrix<f64>) -> Result<f64> {
    Ok(log_det_from_factor(&cholesky_lower(m)?))
}
