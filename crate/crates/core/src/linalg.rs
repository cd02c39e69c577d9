//! Dense complex matrix aliases and the handful of diagonal helpers the
//! precoder formulas lean on.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

pub(crate) const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Squared Euclidean norm of every row.
pub fn row_norms_sq(m: &ComplexMatrix) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|z| z.norm_sqr()).sum())
        .collect()
}

/// Frobenius norm squared, i.e. `tr(A A^H)`.
pub fn frobenius_sq(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// `diag(v) * m` without materializing the diagonal matrix.
pub fn scale_rows(v: &[f64], m: &ComplexMatrix) -> ComplexMatrix {
    debug_assert_eq!(v.len(), m.nrows());
    let mut out = m.clone();
    for (i, &s) in v.iter().enumerate() {
        out.row_mut(i).scale_mut(s);
    }
    out
}

/// `m * diag(v)`.
pub fn scale_cols(m: &ComplexMatrix, v: &[f64]) -> ComplexMatrix {
    debug_assert_eq!(v.len(), m.ncols());
    let mut out = m.clone();
    for (j, &s) in v.iter().enumerate() {
        out.column_mut(j).scale_mut(s);
    }
    out
}

pub fn diag_matrix(v: &[f64]) -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&ComplexVector::from_iterator(
        v.len(),
        v.iter().map(|&x| Complex64::new(x, 0.0)),
    ))
}

pub fn is_hermitian(m: &ComplexMatrix, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    (0..n).all(|i| (i..n).all(|j| (m[(i, j)] - m[(j, i)].conj()).norm() <= tol))
}
