//! Dense complex linear algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen, LU, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

pub(crate) fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Largest entry of `|m - m^dagger|`.
pub fn hermiticity_residual(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

/// Induced 1-norm (maximum absolute column sum).
pub fn one_norm(m: &CMatrix) -> f64 {
    m.column_iter()
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Ascending eigenvalues of the Hermitian part of `m`.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let herm = (m + m.adjoint()).scale(0.5);
    let mut values: Vec<f64> = SymmetricEigen::new(herm).eigenvalues.iter().cloned().collect();
    values.sort_by(f64::total_cmp);
    values
}

fn strictly_lower_is_zero(m: &CMatrix) -> bool {
    let n = m.nrows();
    (0..n).all(|j| (j + 1..n).all(|i| m[(i, j)] == Complex64::new(0.0, 0.0)))
}

fn strictly_upper_is_zero(m: &CMatrix) -> bool {
    let n = m.nrows();
    (0..n).all(|j| (0..j).all(|i| m[(i, j)] == Complex64::new(0.0, 0.0)))
}

/// Eigenvalues of a general complex matrix.
///
/// Exactly triangular input returns its diagonal: the open Hatano-Nelson chain
/// at `t_c = t_d`, `phi = pi/2` is a Jordan-like triangular matrix whose
/// eigenvalues a QR sweep would smear by `eps^(1/N)`. Everything else goes
/// through faer's Schur-based solver.
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    if strictly_lower_is_zero(m) || strictly_upper_is_zero(m) {
        return Ok(m.diagonal().iter().cloned().collect());
    }
    let dense = faer::Mat::<Complex64>::from_fn(n, n, |i, j| m[(i, j)]);
    dense
        .eigenvalues()
        .map_err(|e| Error::NotConverged(format!("complex eigenvalues: {e:?}")))
}

/// Inverse together with the reciprocal 1-norm condition number.
///
/// Returns `Err(rcond)` when the matrix is singular or `rcond < threshold`.
pub fn invert_checked(m: &CMatrix, threshold: f64) -> std::result::Result<CMatrix, f64> {
    let inv = LU::new(m.clone()).try_inverse().ok_or(0.0)?;
    let denom = one_norm(m) * one_norm(&inv);
    let rcond = if denom > 0.0 && denom.is_finite() { 1.0 / denom } else { 0.0 };
    if rcond < threshold || !rcond.is_finite() {
        return Err(rcond);
    }
    Ok(inv)
}

/// Singular value decomposition `m = U diag(s) V^dagger` with `s` ascending.
/// Column `n` of `u` and `v` pairs with `values[n]`.
#[derive(Debug, Clone)]
pub struct AscendingSvd {
    pub values: Vec<f64>,
    pub u: CMatrix,
    pub v: CMatrix,
}

pub fn svd_ascending(m: &CMatrix) -> AscendingSvd {
    let n = m.nrows().min(m.ncols());
    let svd = SVD::new(m.clone(), true, true);
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested V^T").adjoint();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let values = order.iter().map(|&k| svd.singular_values[k]).collect();
    let u = CMatrix::from_fn(u.nrows(), n, |i, j| u[(i, order[j])]);
    let v = CMatrix::from_fn(v.nrows(), n, |i, j| v[(i, order[j])]);
    AscendingSvd { values, u, v }
}
