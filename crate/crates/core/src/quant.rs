//! The complex 1-bit quantizer and the second-order statistics of quantized
//! circular complex Gaussian vectors.
//!
//! For `x ~ CN(0, C)` and `K = diag(C)^{-1/2}` the hard limiter obeys
//!
//! - cross-covariance `E[Q(x) x^H] = sqrt(4/pi) K C`,
//! - output covariance `E[Q(x) Q(x)^H] = (4/pi) (asin(K Re{C} K) + j asin(K Im{C} K))`,
//!
//! with `asin` taken element-wise. The diagonal of the output covariance is
//! always exactly 2. Replacing `asin(x)` by `x` off the diagonal gives the
//! linearized form `(4/pi) (K C K + c I)` with `c = pi/2 - 1`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, ComplexVector};

/// `pi/2 - 1`, the diagonal correction that keeps the linearized covariance
/// at unit-normalized power 2.
pub const LINEARIZATION_GAP: f64 = FRAC_PI_2 - 1.0;

/// Normalized correlations within this distance outside [-1, 1] are clamped.
pub const CORRELATION_CLAMP_TOL: f64 = 1e-9;

/// Relative tolerance on the Hermitian symmetry of an input covariance.
const HERMITIAN_TOL: f64 = 1e-9;

#[inline]
fn sign(v: f64) -> f64 {
    // sign(0) = +1 keeps the quantizer total.
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// 1-bit quantization of a single complex sample onto `{+-1 +- j}`.
#[inline]
pub fn quantize_sample(z: Complex64) -> Complex64 {
    Complex64::new(sign(z.re), sign(z.im))
}

/// A vector whose entries all lie on `{+-1 +- j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedVector(ComplexVector);

impl QuantizedVector {
    pub fn as_vector(&self) -> &ComplexVector {
        &self.0
    }

    pub fn into_vector(self) -> ComplexVector {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn quantize(x: &ComplexVector) -> QuantizedVector {
    QuantizedVector(x.map(quantize_sample))
}

/// Element-wise quantization of a whole block (one symbol vector per column).
pub fn quantize_matrix(x: &ComplexMatrix) -> ComplexMatrix {
    x.map(quantize_sample)
}

/// `diag(C)^{-1/2}` after validating that `C` is a square Hermitian matrix with
/// a strictly positive real diagonal.
fn inv_sqrt_diag(c: &ComplexMatrix) -> Result<Vec<f64>> {
    if !c.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "covariance must be square, got {}x{}",
            c.nrows(),
            c.ncols()
        )));
    }
    let n = c.nrows();
    let scale = c.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    for i in 0..n {
        for j in i..n {
            if (c[(i, j)] - c[(j, i)].conj()).norm() > HERMITIAN_TOL * scale {
                return Err(Error::InvalidCovariance {
                    row: i,
                    col: j,
                    value: f64::NAN,
                });
            }
        }
    }
    (0..n)
        .map(|i| {
            let v = c[(i, i)].re;
            if v > 0.0 && v.is_finite() {
                Ok(1.0 / v.sqrt())
            } else {
                Err(Error::DegenerateCovariance { index: i, value: v })
            }
        })
        .collect()
}

/// `K C K` with `K = diag(C)^{-1/2}`: the matrix of normalized correlations.
/// Entries within [`CORRELATION_CLAMP_TOL`] of the unit circle boundary in
/// either component are clamped, anything further out is rejected.
fn normalized_correlation(c: &ComplexMatrix) -> Result<ComplexMatrix> {
    let k = inv_sqrt_diag(c)?;
    let n = c.nrows();
    let mut r = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let z = c[(i, j)] * (k[i] * k[j]);
            let clamp = |v: f64| -> Result<f64> {
                if v.abs() <= 1.0 {
                    Ok(v)
                } else if v.abs() <= 1.0 + CORRELATION_CLAMP_TOL {
                    Ok(v.signum())
                } else {
                    Err(Error::InvalidCovariance {
                        row: i,
                        col: j,
                        value: v,
                    })
                }
            };
            r[(i, j)] = Complex64::new(clamp(z.re)?, clamp(z.im)?);
        }
    }
    Ok(r)
}

/// Cross-covariance `E[Q(x) x^H] = sqrt(4/pi) K C`.
pub fn cross_cov_quantized_unquantized(c: &ComplexMatrix) -> Result<ComplexMatrix> {
    let k = inv_sqrt_diag(c)?;
    let gain = (4.0 / PI).sqrt();
    Ok(crate::linalg::scale_rows(
        &k.iter().map(|&v| gain * v).collect::<Vec<_>>(),
        c,
    ))
}

/// Exact covariance of `Q(x)` for `x ~ CN(0, C)` (arcsine law).
pub fn arcsine_cov_quantized(c: &ComplexMatrix) -> Result<ComplexMatrix> {
    let mut r = normalized_correlation(c)?;
    let n = r.nrows();
    for i in 0..n {
        for j in 0..n {
            r[(i, j)] = if i == j {
                Complex64::new(2.0, 0.0)
            } else {
                let z = r[(i, j)];
                Complex64::new(z.re.asin(), z.im.asin()) * (4.0 / PI)
            };
        }
    }
    Ok(r)
}

/// First-order approximation `(4/pi) (K C K + c I)` of [`arcsine_cov_quantized`].
pub fn linearized_cov_quantized(c: &ComplexMatrix) -> Result<ComplexMatrix> {
    let mut r = normalized_correlation(c)?;
    let n = r.nrows();
    for i in 0..n {
        for j in 0..n {
            r[(i, j)] = if i == j {
                Complex64::new(2.0, 0.0)
            } else {
                r[(i, j)] * (4.0 / PI)
            };
        }
    }
    Ok(r)
}
