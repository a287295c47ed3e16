//! Small dense helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

/// Column-stacking `vec` of a square matrix.
pub fn vec_of(m: &DMatrix<Complex64>) -> DVector<Complex64> {
    // nalgebra storage is column-major, which is exactly vec().
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`] for a `P^2` vector.
pub fn unvec(v: &DVector<Complex64>, order: usize) -> DMatrix<Complex64> {
    assert_eq!(v.len(), order * order, "unvec: length {} is not {order}^2", v.len());
    DMatrix::from_column_slice(order, order, v.as_slice())
}

/// `vec(g g^H)`.
pub fn outer_vec(g: &DVector<Complex64>) -> DVector<Complex64> {
    vec_of(&(g * g.adjoint()))
}

/// (row, col) of 0-based vec index `i` for a `P x P` matrix.
#[inline]
pub fn vec_position(i: usize, order: usize) -> (usize, usize) {
    (i % order, i / order)
}

/// Largest entrywise modulus of `m - m^H`.
pub fn hermitian_defect(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for c in 0..n {
        for r in 0..n {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

/// `(A + A^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of a real symmetric matrix (after symmetrization).
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    SymmetricEigen::new(symmetrize(m)).eigenvalues
}

/// Smallest eigenvalue of a real symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).min()
}

/// 2-norm condition number of a symmetric matrix; infinite when singular.
pub fn sym_condition(m: &DMatrix<f64>) -> f64 {
    let ev = sym_eigenvalues(m);
    let hi = ev.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let lo = ev.iter().fold(f64::INFINITY, |a, &x| a.min(x.abs()));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Eigenvalues of a complex Hermitian matrix.
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> DVector<f64> {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    SymmetricEigen::new(h).eigenvalues
}

/// 2-norm condition number of a Hermitian matrix; infinite when singular.
pub fn hermitian_condition(m: &DMatrix<Complex64>) -> f64 {
    let ev = hermitian_eigenvalues(m);
    let hi = ev.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let lo = ev.iter().fold(f64::INFINITY, |a, &x| a.min(x.abs()));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Stack `(Re v, Im v)`.
pub fn to_real(v: &DVector<Complex64>) -> DVector<f64> {
    let p = v.len();
    DVector::from_fn(2 * p, |i, _| if i < p { v[i].re } else { v[i - p].im })
}

/// Inverse of [`to_real`].
pub fn from_real(v: &DVector<f64>) -> DVector<Complex64> {
    assert!(v.len().is_multiple_of(2), "from_real: odd length");
    let p = v.len() / 2;
    DVector::from_fn(p, |i, _| Complex64::new(v[i], v[i + p]))
}

/// Block-diagonal concatenation of two real matrices.
pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows() + b.nrows();
    let m = a.ncols() + b.ncols();
    let mut out = DMatrix::zeros(n, m);
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), (b.nrows(), b.ncols())).copy_from(b);
    out
}
