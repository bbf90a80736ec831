//! Small dense-matrix helpers shared by the solvers.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `[top; bottom]`
pub fn vstack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(top.ncols(), bottom.ncols(), "vstack: column mismatch");
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.view_mut((0, 0), top.shape()).copy_from(top);
    out.view_mut((top.nrows(), 0), bottom.shape()).copy_from(bottom);
    out
}

/// `[left, right]`
pub fn hstack(left: &DMatrix<f64>, right: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(left.nrows(), right.nrows(), "hstack: row mismatch");
    let mut out = DMatrix::zeros(left.nrows(), left.ncols() + right.ncols());
    out.view_mut((0, 0), left.shape()).copy_from(left);
    out.view_mut((0, left.ncols()), right.shape()).copy_from(right);
    out
}

/// `[[a, b], [c, d]]`
pub fn block2(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    vstack(&hstack(a, b), &hstack(c, d))
}

pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut(a.shape(), b.shape()).copy_from(b);
    out
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Largest absolute entry.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// `max|a - b|` entrywise.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Relative asymmetry `max|a - aᵀ| / max(1, max|a|)`; `None` if not square.
pub fn asymmetry(a: &DMatrix<f64>) -> Option<f64> {
    if !a.is_square() {
        return None;
    }
    let scale = max_abs(a).max(1.0);
    Some(max_abs_diff(a, &a.transpose()) / scale)
}

/// Smallest eigenvalue of the symmetric part of `a`.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = symmetrize(a);
    sym.symmetric_eigen().eigenvalues.iter().fold(f64::INFINITY, |m, &x| m.min(x))
}

/// A factor `F` with `F Fᵀ = a` for symmetric positive semi-definite `a`.
///
/// Built from the eigendecomposition so singular covariances are accepted;
/// slightly negative eigenvalues from roundoff are clamped to zero.
pub fn psd_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrize(a).symmetric_eigen();
    let mut factor = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = libm::sqrt(lambda.max(0.0));
        factor.column_mut(j).scale_mut(s);
    }
    factor
}

pub fn inverse(a: &DMatrix<f64>, field: &'static str) -> Result<DMatrix<f64>> {
    a.clone().try_inverse().ok_or_else(|| Error::InvalidModel(alloc::format!("{field} is singular")))
}

pub fn check_shape(field: &'static str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.shape() == (rows, cols) {
        Ok(())
    } else {
        Err(Error::Dimension { field, expected_rows: rows, expected_cols: cols, rows: m.nrows(), cols: m.ncols() })
    }
}

/// `trace(a b)` without forming the product.
pub fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.ncols(), b.nrows());
    assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}
