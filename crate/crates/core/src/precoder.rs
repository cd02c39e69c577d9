//! Precoder types, the closed-form MSE objective of the two-stage precoder,
//! its gradient, the transmit power projection and the Wiener-filter baseline.
//!
//! With the analog stage fixed to `D = diag(P P^H)^{1/2}` the received
//! covariance diagonal collapses to
//!
//! ```text
//! diag(C_x) = (4/pi) diag(H (P P^H + c diag(P P^H)) H^H) + sigma_eta^2
//! ```
//!
//! and the objective becomes
//!
//! ```text
//! MSE(P) = sigma_s^2 M + 2M - (8 sigma_s / pi) Re tr(K1 H P),   K1 = diag(C_x)^{-1/2}
//! ```
//!
//! subject to `tr(P P^H) <= Etx / 2`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, ZERO};
use crate::quant::LINEARIZATION_GAP;

/// Row norms below this are floored while optimizing over the row-normalized
/// precoder, keeping the objective differentiable when an antenna goes silent.
pub const ROW_NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemDimensions {
    /// Base-station antennas `N`.
    pub n_antennas: usize,
    /// Single-antenna users `M`.
    pub n_users: usize,
    /// Per-user symbol variance `sigma_s^2`.
    pub symbol_variance: f64,
    /// Transmit power budget `Etx` in linear units.
    pub etx: f64,
    /// Noise covariance is `noise_variance * I_M`.
    pub noise_variance: f64,
}

impl SystemDimensions {
    pub fn new(n_antennas: usize, n_users: usize, symbol_variance: f64, etx: f64) -> Result<Self> {
        let dims = Self {
            n_antennas,
            n_users,
            symbol_variance,
            etx,
            noise_variance: 1.0,
        };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_users < 1 {
            return Err(Error::InvalidDimensions("at least one user is required".into()));
        }
        if self.n_users > self.n_antennas {
            return Err(Error::InvalidDimensions(format!(
                "M > N: {} users exceed {} antennas",
                self.n_users, self.n_antennas
            )));
        }
        if !(self.symbol_variance > 0.0 && self.symbol_variance.is_finite()) {
            return Err(Error::InvalidDimensions(format!(
                "symbol variance must be positive, got {}",
                self.symbol_variance
            )));
        }
        if !(self.etx > 0.0 && self.etx.is_finite()) {
            return Err(Error::InvalidDimensions(format!(
                "transmit power must be positive, got {}",
                self.etx
            )));
        }
        if !(self.noise_variance > 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::InvalidDimensions(format!(
                "noise variance must be positive, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }

    /// Same system at a different transmit power.
    pub fn with_etx(mut self, etx: f64) -> Self {
        self.etx = etx;
        self
    }

    pub fn sigma_s(&self) -> f64 {
        self.symbol_variance.sqrt()
    }

    /// Objective value when no signal reaches the users.
    pub fn mse_ceiling(&self) -> f64 {
        let m = self.n_users as f64;
        self.symbol_variance * m + 2.0 * m
    }

    fn check_channel(&self, h: &ComplexMatrix) -> Result<()> {
        if h.nrows() != self.n_users || h.ncols() != self.n_antennas {
            return Err(Error::DimensionMismatch(format!(
                "channel is {}x{}, expected {}x{}",
                h.nrows(),
                h.ncols(),
                self.n_users,
                self.n_antennas
            )));
        }
        Ok(())
    }

    fn check_precoder(&self, p: &ComplexMatrix) -> Result<()> {
        if p.nrows() != self.n_antennas || p.ncols() != self.n_users {
            return Err(Error::DimensionMismatch(format!(
                "precoder is {}x{}, expected {}x{}",
                p.nrows(),
                p.ncols(),
                self.n_antennas,
                self.n_users
            )));
        }
        Ok(())
    }
}

/// Digital precoder `P` (N x M).
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalPrecoder(ComplexMatrix);

impl DigitalPrecoder {
    pub fn new(p: ComplexMatrix) -> Self {
        Self(p)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    /// `tr(P P^H)`.
    pub fn trace_power(&self) -> f64 {
        linalg::frobenius_sq(&self.0)
    }
}

impl From<ComplexMatrix> for DigitalPrecoder {
    fn from(p: ComplexMatrix) -> Self {
        Self(p)
    }
}

/// Diagonal of the real analog precoder `D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogPrecoder(Vec<f64>);

impl AnalogPrecoder {
    pub fn new(d: Vec<f64>) -> Self {
        Self(d)
    }

    /// `D = alpha I` with `alpha = sqrt(Etx / 2N)`, spending exactly `Etx`.
    pub fn equal_power(dims: &SystemDimensions) -> Self {
        let alpha = (dims.etx / (2.0 * dims.n_antennas as f64)).sqrt();
        Self(vec![alpha; dims.n_antennas])
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `E ||D Q_t(.)||^2 = 2 tr(D^2)`.
    pub fn transmit_power(&self) -> f64 {
        2.0 * self.0.iter().map(|d| d * d).sum::<f64>()
    }
}

/// Objective value together with the normalizers it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct MseEvaluation {
    pub mse: f64,
    /// Diagonal of `K1 = diag(C_x)^{-1/2}`.
    pub k1: Vec<f64>,
    /// Diagonal of `K2 = diag(P P^H)^{-1/2}`.
    pub k2: Vec<f64>,
    /// `diag(C_x)`.
    pub rx_cov_diag: Vec<f64>,
}

impl MseEvaluation {
    pub const fn c() -> f64 {
        LINEARIZATION_GAP
    }
}

/// `diag(P P^H)^{-1/2}`.
pub fn k2_of(p: &DigitalPrecoder) -> Result<Vec<f64>> {
    linalg::row_norms_sq(p.matrix())
        .into_iter()
        .enumerate()
        .map(|(row, n2)| {
            if n2 > 0.0 {
                Ok(1.0 / n2.sqrt())
            } else {
                Err(Error::DegeneratePrecoder { row })
            }
        })
        .collect()
}

/// `D = diag(P P^H)^{1/2}`; a zero row switches its antenna off.
pub fn analog_from_digital(p: &DigitalPrecoder) -> AnalogPrecoder {
    AnalogPrecoder(linalg::row_norms_sq(p.matrix()).into_iter().map(f64::sqrt).collect())
}

/// Quantities shared by the objective and its gradient.
struct Core {
    hp: ComplexMatrix,
    rx_cov_diag: Vec<f64>,
    k1: Vec<f64>,
    mse: f64,
}

fn core(h: &ComplexMatrix, p: &ComplexMatrix, dims: &SystemDimensions) -> Core {
    let hp = h * p;
    let rows = linalg::row_norms_sq(p);
    let gain = 4.0 / PI;
    let rx_cov_diag: Vec<f64> = (0..h.nrows())
        .map(|m| {
            let signal: f64 = hp.row(m).iter().map(|z| z.norm_sqr()).sum();
            let distortion: f64 = h.row(m).iter().zip(&rows).map(|(hmn, r)| hmn.norm_sqr() * r).sum();
            gain * (signal + LINEARIZATION_GAP * distortion) + dims.noise_variance
        })
        .collect();
    let k1: Vec<f64> = rx_cov_diag.iter().map(|v| 1.0 / v.sqrt()).collect();
    let corr: f64 = k1.iter().enumerate().map(|(m, k)| k * hp[(m, m)].re).sum();
    let mse = dims.mse_ceiling() - 8.0 * dims.sigma_s() / PI * corr;
    Core {
        hp,
        rx_cov_diag,
        k1,
        mse,
    }
}

/// Wirtinger derivative `dMSE/dP`, term by term:
///
/// ```text
/// -(4/pi) sigma_s [ H^T K1
///                   - (2/pi)  H^T K1^3 diag(H* P*) H* P*
///                   - (2c/pi) diag(H^T diag(H* P* K1^3) H*) P*
///                   - (2/pi)  H^T K1^3 diag(P^T H^T) H* P*
///                   - (2c/pi) diag(H^T diag(K1^3 P^T H^T) H*) P* ]
/// ```
fn wirtinger_gradient(h: &ComplexMatrix, p: &ComplexMatrix, dims: &SystemDimensions, core: &Core) -> ComplexMatrix {
    let m = h.nrows();
    let n = h.ncols();
    let k1_cubed: Vec<f64> = core.k1.iter().map(|k| k * k * k).collect();
    let trace_terms: Vec<Complex64> = (0..m).map(|i| core.hp[(i, i)]).collect();

    let h_t = h.transpose();
    let h_conj = h.conjugate();
    let p_conj = p.conjugate();
    let hp_conj = core.hp.conjugate();

    let term1 = linalg::scale_cols(&h_t, &core.k1);

    // diag(H* P*) and diag(P^T H^T) enter through K1^3 on the left of H* P*.
    let w_conj: Vec<Complex64> = (0..m).map(|i| trace_terms[i].conj() * k1_cubed[i]).collect();
    let w: Vec<Complex64> = (0..m).map(|i| trace_terms[i] * k1_cubed[i]).collect();
    let left = |weights: &[Complex64]| -> ComplexMatrix {
        let mut t = h_t.clone();
        for (j, wj) in weights.iter().enumerate() {
            t.column_mut(j).iter_mut().for_each(|z| *z *= *wj);
        }
        t * &hp_conj
    };
    let term2 = left(&w_conj);
    let term4 = left(&w);

    // diag(H^T diag(x) H*) has entries sum_m |H_mn|^2 x_m.
    let row_weight = |weights: &[Complex64]| -> ComplexMatrix {
        let mut t = p_conj.clone();
        for col in 0..n {
            let s: Complex64 = (0..m).map(|i| h_t[(col, i)] * weights[i] * h_conj[(i, col)]).sum();
            t.row_mut(col).iter_mut().for_each(|z| *z *= s);
        }
        t
    };
    let term3 = row_weight(&w_conj);
    let term5 = row_weight(&w);

    let a = 2.0 / PI;
    let ac = 2.0 * LINEARIZATION_GAP / PI;
    let bracket = term1
        - term2 * Complex64::new(a, 0.0)
        - term3 * Complex64::new(ac, 0.0)
        - term4 * Complex64::new(a, 0.0)
        - term5 * Complex64::new(ac, 0.0);
    bracket * Complex64::new(-4.0 / PI * dims.sigma_s(), 0.0)
}

/// `diag(C_x)` of the received signal with `D = diag(P P^H)^{1/2}`.
pub fn effective_rx_cov_diag(h: &ComplexMatrix, p: &DigitalPrecoder, dims: &SystemDimensions) -> Result<Vec<f64>> {
    dims.check_channel(h)?;
    dims.check_precoder(p.matrix())?;
    Ok(core(h, p.matrix(), dims).rx_cov_diag)
}

pub fn mse_objective(h: &ComplexMatrix, p: &DigitalPrecoder, dims: &SystemDimensions) -> Result<MseEvaluation> {
    dims.check_channel(h)?;
    dims.check_precoder(p.matrix())?;
    let k2 = k2_of(p)?;
    let c = core(h, p.matrix(), dims);
    Ok(MseEvaluation {
        mse: c.mse,
        k1: c.k1,
        k2,
        rx_cov_diag: c.rx_cov_diag,
    })
}

/// Wirtinger derivative `dMSE/dP = (1/2)(d/dRe P - j d/dIm P)` of
/// [`mse_objective`].
///
/// The steepest-descent direction of the real parameterization is
/// `-2 (dMSE/dP)*`; the gradient projection step `P - mu (dMSE/dP)*` therefore
/// moves along it with an effective step of `mu / 2`.
pub fn mse_gradient(h: &ComplexMatrix, p: &DigitalPrecoder, dims: &SystemDimensions) -> Result<ComplexMatrix> {
    dims.check_channel(h)?;
    dims.check_precoder(p.matrix())?;
    k2_of(p)?;
    let c = core(h, p.matrix(), dims);
    Ok(wirtinger_gradient(h, p.matrix(), dims, &c))
}

/// Objective with an explicit analog stage: with `Q = D K2 P`,
///
/// ```text
/// MSE = sigma_s^2 M + 2M - (8 sigma_s/pi) Re tr(K1 H Q),
/// diag(C_x) = (4/pi) diag(H (Q Q^H + c D^2) H^H) + sigma_eta^2.
/// ```
///
/// Reduces to [`mse_objective`] when `D = diag(P P^H)^{1/2}`.
pub fn mse_with_analog(
    h: &ComplexMatrix,
    p: &DigitalPrecoder,
    d: &AnalogPrecoder,
    dims: &SystemDimensions,
) -> Result<f64> {
    dims.check_channel(h)?;
    dims.check_precoder(p.matrix())?;
    if d.len() != dims.n_antennas {
        return Err(Error::DimensionMismatch(format!(
            "analog precoder has {} coefficients, expected {}",
            d.len(),
            dims.n_antennas
        )));
    }
    let k2 = k2_of(p)?;
    let scale: Vec<f64> = k2.iter().zip(d.coefficients()).map(|(k, d)| k * d).collect();
    let q = linalg::scale_rows(&scale, p.matrix());
    Ok(core(h, &q, dims).mse)
}

/// Projection onto `tr(P P^H) <= Etx / 2` by uniform scaling.
pub fn project_power(p: DigitalPrecoder, dims: &SystemDimensions) -> DigitalPrecoder {
    let power = p.trace_power();
    let budget = 0.5 * dims.etx;
    if power > budget {
        let s = (budget / power).sqrt();
        DigitalPrecoder(p.0 * Complex64::new(s, 0.0))
    } else {
        p
    }
}

/// Transmit Wiener filter `beta (H^H H + xi I)^{-1} H^H` with
/// `xi = tr(C_eta) / Etx`, normalized to the unquantized budget
/// `sigma_s^2 tr(P P^H) = Etx`.
///
/// Computed through the push-through identity as `H^H (H H^H + xi I)^{-1}`
/// so only an `M x M` system is solved.
pub fn wf_precoder(h: &ComplexMatrix, dims: &SystemDimensions) -> Result<DigitalPrecoder> {
    dims.check_channel(h)?;
    let m = dims.n_users;
    let xi = dims.noise_variance * m as f64 / dims.etx;
    let gram = h * h.adjoint() + ComplexMatrix::identity(m, m) * Complex64::new(xi, 0.0);
    let inv = gram.try_inverse().ok_or(Error::Singular)?;
    let f = h.adjoint() * inv;
    let power = dims.symbol_variance * linalg::frobenius_sq(&f);
    if !(power > 0.0 && power.is_finite()) {
        return Err(Error::Singular);
    }
    let beta = (dims.etx / power).sqrt();
    Ok(DigitalPrecoder(f * Complex64::new(beta, 0.0)))
}

/// MSE of the precoder under an equal-power analog stage `D = alpha I`, as a
/// function of `P` (only its row directions matter).
#[derive(Debug, Clone, Copy)]
pub struct EqualPowerObjective {
    pub alpha: f64,
}

impl EqualPowerObjective {
    pub fn new(dims: &SystemDimensions) -> Self {
        Self {
            alpha: (dims.etx / (2.0 * dims.n_antennas as f64)).sqrt(),
        }
    }

    fn row_scales(&self, p: &ComplexMatrix) -> Vec<f64> {
        linalg::row_norms_sq(p)
            .into_iter()
            .map(|n2| self.alpha / n2.sqrt().max(ROW_NORM_FLOOR))
            .collect()
    }

    pub fn value(&self, h: &ComplexMatrix, p: &ComplexMatrix, dims: &SystemDimensions) -> f64 {
        let q = linalg::scale_rows(&self.row_scales(p), p);
        core(h, &q, dims).mse
    }

    /// Wirtinger derivative with respect to `P`, chained through the row
    /// normalization `q_n = alpha p_n / ||p_n||`.
    pub fn gradient(&self, h: &ComplexMatrix, p: &ComplexMatrix, dims: &SystemDimensions) -> ComplexMatrix {
        let scales = self.row_scales(p);
        let q = linalg::scale_rows(&scales, p);
        let c = core(h, &q, dims);
        let wq = wirtinger_gradient(h, &q, dims, &c);
        let mut out = ComplexMatrix::from_element(p.nrows(), p.ncols(), ZERO);
        for n in 0..p.nrows() {
            let norm = p.row(n).norm().max(ROW_NORM_FLOOR);
            let u = p.row(n) / Complex64::new(norm, 0.0);
            // Real gradient g = 2 conj(w); strip its radial component along u.
            let g = wq.row(n).map(|z| 2.0 * z.conj());
            let radial: f64 = g.iter().zip(u.iter()).map(|(a, b)| (a * b.conj()).re).sum();
            let scale = self.alpha / norm;
            for j in 0..p.ncols() {
                let gp = (g[j] - u[j] * radial) * scale;
                out[(n, j)] = 0.5 * gp.conj();
            }
        }
        out
    }
}

/// MSE objective with the analog stage tied to the row norms of `P`.
pub(crate) fn mse_value_unchecked(h: &ComplexMatrix, p: &ComplexMatrix, dims: &SystemDimensions) -> f64 {
    core(h, p, dims).mse
}

pub(crate) fn mse_gradient_unchecked(h: &ComplexMatrix, p: &ComplexMatrix, dims: &SystemDimensions) -> ComplexMatrix {
    let c = core(h, p, dims);
    wirtinger_gradient(h, p, dims, &c)
}
