//! Monte Carlo simulation of the downlink chain
//! `s -> P -> Q_t -> D -> H -> + eta -> Q_r -> s_hat` and the three
//! experiments built on it: BER against transmit power, sensitivity of QP-GP
//! to analog-stage errors, and the spread of the analog coefficients.
//!
//! Every channel realization owns independent random streams derived from
//! `(master seed, realization index, purpose)`, so results do not depend on
//! how realizations are scheduled across threads.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{self, GpConfig, GpStep};
use crate::linalg::{self, ComplexMatrix};
use crate::precoder::{wf_precoder, AnalogPrecoder, DigitalPrecoder, SystemDimensions};
use crate::quant::quantize_matrix;

/// Converts a power in dB to linear units.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
enum Purpose {
    Channel = 0,
    Bits = 1,
    Noise = 2,
    Perturbation = 3,
}

/// Independent ChaCha stream for one realization and purpose.
fn stream(master: u64, realization: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(realization * 4 + purpose as u64);
    rng
}

fn complex_gaussian<R: Rng>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, variance: f64) -> ComplexMatrix {
    // Column-major fill keeps the draw order independent of nalgebra internals.
    let mut m = ComplexMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = complex_gaussian(rng, variance);
        }
    }
    m
}

/// `M x N` channel with i.i.d. `CN(0, 1)` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    matrix: ComplexMatrix,
    seed: u64,
    realization: u64,
}

impl ChannelMatrix {
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn realization(&self) -> u64 {
        self.realization
    }
}

pub fn draw_channel(dims: &SystemDimensions, seed: u64) -> ChannelMatrix {
    draw_realization(dims, seed, 0)
}

/// Channel of realization `index` under master seed `seed`.
pub fn draw_realization(dims: &SystemDimensions, seed: u64, index: u64) -> ChannelMatrix {
    let mut rng = stream(seed, index, Purpose::Channel);
    ChannelMatrix {
        matrix: gaussian_matrix(&mut rng, dims.n_users, dims.n_antennas, 1.0),
        seed,
        realization: index,
    }
}

/// QPSK block: `M x N_b` Gray-mapped symbols with `E|s|^2 = sigma_s^2`.
///
/// Bit pairs map to `sqrt(sigma_s^2 / 2) ((1 - 2 b0) + j (1 - 2 b1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlock {
    symbols: ComplexMatrix,
    bits: Vec<[u8; 2]>,
}

impl SymbolBlock {
    pub fn from_bits(n_users: usize, bits: Vec<[u8; 2]>, symbol_variance: f64) -> Self {
        assert!(n_users > 0 && bits.len().is_multiple_of(n_users));
        let amp = (0.5 * symbol_variance).sqrt();
        let cols = bits.len() / n_users;
        let symbols = ComplexMatrix::from_fn(n_users, cols, |i, j| {
            let [b0, b1] = bits[j * n_users + i];
            Complex64::new(amp * (1.0 - 2.0 * b0 as f64), amp * (1.0 - 2.0 * b1 as f64))
        });
        Self { symbols, bits }
    }

    pub fn random<R: Rng>(rng: &mut R, n_users: usize, n_symbols: usize, symbol_variance: f64) -> Self {
        let bits = (0..n_users * n_symbols)
            .map(|_| [rng.random_range(0..2u8), rng.random_range(0..2u8)])
            .collect();
        Self::from_bits(n_users, bits, symbol_variance)
    }

    pub fn symbols(&self) -> &ComplexMatrix {
        &self.symbols
    }

    /// Bit pairs in column-major symbol order.
    pub fn bits(&self) -> &[[u8; 2]] {
        &self.bits
    }

    pub fn n_bits(&self) -> u64 {
        2 * self.bits.len() as u64
    }

    /// Bit errors of a detected block, demapped by the signs of its entries.
    pub fn count_bit_errors(&self, detected: &ComplexMatrix) -> u64 {
        assert_eq!(detected.shape(), self.symbols.shape());
        let m = self.symbols.nrows();
        self.bits
            .iter()
            .enumerate()
            .map(|(k, &[b0, b1])| {
                let z = detected[(k % m, k / m)];
                let d0 = (z.re < 0.0) as u8;
                let d1 = (z.im < 0.0) as u8;
                ((d0 != b0) as u64) + ((d1 != b1) as u64)
            })
            .sum()
    }
}

/// `Q_r(H D Q_t(P s) + eta)` for every symbol column.
pub fn transmit_chain(
    s: &ComplexMatrix,
    p: &DigitalPrecoder,
    d: &[f64],
    h: &ComplexMatrix,
    noise: &ComplexMatrix,
) -> ComplexMatrix {
    let y_q = quantize_matrix(&(p.matrix() * s));
    let y_qd = linalg::scale_rows(d, &y_q);
    quantize_matrix(&(h * y_qd + noise))
}

/// Linear chain without quantizers, detected by nearest QPSK symbol.
pub fn unquantized_chain(
    s: &ComplexMatrix,
    p: &DigitalPrecoder,
    h: &ComplexMatrix,
    noise: &ComplexMatrix,
) -> ComplexMatrix {
    let y = h * (p.matrix() * s) + noise;
    // Nearest point of a symmetric QPSK alphabet is decided by the signs.
    quantize_matrix(&y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Wiener filter, no quantizers anywhere.
    WfNoQuant,
    /// Wiener filter through 1-bit converters with `D = alpha I`.
    #[serde(rename = "wf-d-i")]
    WfEqualPower,
    /// Gradient-projection precoder with `D = alpha I`.
    #[serde(rename = "qp-gp-d-i")]
    QpGpEqualPower,
    /// Gradient-projection precoder with `D = diag(P P^H)^{1/2}`.
    QpGp,
    /// Reserved for the quantized Wiener filter baseline; not implemented.
    Qwp,
}

impl Scheme {
    pub const IMPLEMENTED: [Scheme; 4] = [
        Scheme::WfNoQuant,
        Scheme::WfEqualPower,
        Scheme::QpGpEqualPower,
        Scheme::QpGp,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::WfNoQuant => "wf-no-quant",
            Scheme::WfEqualPower => "wf-d-i",
            Scheme::QpGpEqualPower => "qp-gp-d-i",
            Scheme::QpGp => "qp-gp",
            Scheme::Qwp => "qwp",
        }
    }

    /// Legend used in plots.
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::WfNoQuant => "WF, no Quant.",
            Scheme::WfEqualPower => "WF, D=I",
            Scheme::QpGpEqualPower => "QP-GP, D=I",
            Scheme::QpGp => "QP-GP",
            Scheme::Qwp => "QWP",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        [
            Scheme::WfNoQuant,
            Scheme::WfEqualPower,
            Scheme::QpGpEqualPower,
            Scheme::QpGp,
            Scheme::Qwp,
        ]
        .into_iter()
        .find(|sc| sc.name().eq_ignore_ascii_case(t) || sc.label().eq_ignore_ascii_case(t))
        .ok_or_else(|| Error::UnknownScheme(t.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub etx_db: f64,
    pub bits: u64,
    pub errors: u64,
}

impl BerPoint {
    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.errors as f64 / self.bits as f64
        }
    }

    /// Binomial standard error `sqrt(BER (1 - BER) / bits)`.
    pub fn stderr(&self) -> f64 {
        if self.bits == 0 {
            return 0.0;
        }
        let b = self.ber();
        (b * (1.0 - b) / self.bits as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerCurve {
    pub scheme: String,
    pub seed: u64,
    pub points: Vec<BerPoint>,
}

impl BerCurve {
    pub fn point(&self, etx_db: f64) -> Option<&BerPoint> {
        self.points.iter().find(|p| p.etx_db == etx_db)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerExperiment {
    pub schemes: Vec<Scheme>,
    pub etx_db: Vec<f64>,
    pub n_channels: usize,
    pub n_symbols: usize,
    /// `etx` is ignored; each grid point sets its own budget.
    pub dims: SystemDimensions,
    pub seed: u64,
    pub gp: GpConfig,
}

impl BerExperiment {
    fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        self.gp.validate()?;
        if self.n_channels == 0 || self.n_symbols == 0 {
            return Err(Error::InvalidConfig(
                "channel and symbol counts must be at least 1".into(),
            ));
        }
        if self.etx_db.is_empty() {
            return Err(Error::InvalidConfig("empty transmit power grid".into()));
        }
        if let Some(s) = self.schemes.iter().find(|s| **s == Scheme::Qwp) {
            return Err(Error::UnimplementedScheme(s.name().into()));
        }
        Ok(())
    }
}

/// Shared per-realization draws: channel, source bits and receiver noise.
struct Realization {
    h: ComplexMatrix,
    block: SymbolBlock,
    noise: ComplexMatrix,
}

fn realization(dims: &SystemDimensions, seed: u64, index: u64, n_symbols: usize) -> Realization {
    let h = draw_realization(dims, seed, index).matrix;
    let block = SymbolBlock::random(
        &mut stream(seed, index, Purpose::Bits),
        dims.n_users,
        n_symbols,
        dims.symbol_variance,
    );
    let noise = gaussian_matrix(
        &mut stream(seed, index, Purpose::Noise),
        dims.n_users,
        n_symbols,
        dims.noise_variance,
    );
    Realization { h, block, noise }
}

/// Bit errors of every requested scheme at one transmit power.
fn scheme_errors(r: &Realization, schemes: &[Scheme], dims: &SystemDimensions, gp_cfg: &GpConfig) -> Result<Vec<u64>> {
    let s = r.block.symbols();
    let mut wf = None;
    let mut qp = None;
    schemes
        .iter()
        .map(|scheme| {
            let detected = match scheme {
                Scheme::WfNoQuant | Scheme::WfEqualPower => {
                    if wf.is_none() {
                        wf = Some(wf_precoder(&r.h, dims)?);
                    }
                    let p = wf.as_ref().expect("set above");
                    if *scheme == Scheme::WfNoQuant {
                        unquantized_chain(s, p, &r.h, &r.noise)
                    } else {
                        let d = AnalogPrecoder::equal_power(dims);
                        transmit_chain(s, p, d.coefficients(), &r.h, &r.noise)
                    }
                }
                Scheme::QpGp => {
                    if qp.is_none() {
                        qp = Some(gp::gradient_projection(&r.h, dims, gp_cfg)?);
                    }
                    let res = qp.as_ref().expect("set above");
                    transmit_chain(s, &res.digital, res.analog.coefficients(), &r.h, &r.noise)
                }
                Scheme::QpGpEqualPower => {
                    let d = AnalogPrecoder::equal_power(dims);
                    let p = match gp_cfg.equal_power_mode {
                        gp::EqualPowerMode::ReuseDigital => {
                            if qp.is_none() {
                                qp = Some(gp::gradient_projection(&r.h, dims, gp_cfg)?);
                            }
                            qp.as_ref().expect("set above").digital.clone()
                        }
                        gp::EqualPowerMode::Reoptimize => gp::qp_gp_equal_power(&r.h, dims, gp_cfg)?.digital,
                    };
                    transmit_chain(s, &p, d.coefficients(), &r.h, &r.noise)
                }
                Scheme::Qwp => return Err(Error::UnimplementedScheme(scheme.name().into())),
            };
            Ok(r.block.count_bit_errors(&detected))
        })
        .collect()
}

/// BER of every scheme over the transmit power grid.
///
/// Channels, bits and noise are shared across schemes and grid points within
/// a realization.
pub fn ber_experiment(exp: &BerExperiment) -> Result<Vec<BerCurve>> {
    exp.validate()?;
    let per_realization: Vec<Result<Vec<Vec<u64>>>> = (0..exp.n_channels as u64)
        .into_par_iter()
        .map(|k| {
            let r = realization(&exp.dims, exp.seed, k, exp.n_symbols);
            exp.etx_db
                .iter()
                .map(|&db| scheme_errors(&r, &exp.schemes, &exp.dims.with_etx(db_to_linear(db)), &exp.gp))
                .collect()
        })
        .collect();

    let mut errors = vec![vec![0u64; exp.schemes.len()]; exp.etx_db.len()];
    for res in per_realization {
        for (acc, row) in errors.iter_mut().zip(res?) {
            for (a, e) in acc.iter_mut().zip(row) {
                *a += e;
            }
        }
    }
    let bits = 2 * (exp.dims.n_users * exp.n_symbols * exp.n_channels) as u64;
    Ok(exp
        .schemes
        .iter()
        .enumerate()
        .map(|(si, scheme)| BerCurve {
            scheme: scheme.name().to_string(),
            seed: exp.seed,
            points: exp
                .etx_db
                .iter()
                .enumerate()
                .map(|(ei, &etx_db)| BerPoint {
                    etx_db,
                    bits,
                    errors: errors[ei][si],
                })
                .collect(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationModel {
    /// `d_i (1 + level u_i)`, `u_i ~ U[-1, 1]`.
    #[default]
    Uniform,
    /// `d_i (1 + level g_i)`, `g_i ~ N(0, 1)`.
    Gaussian,
}

impl FromStr for PerturbationModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(Self::Uniform),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(Error::InvalidConfig(format!("unknown perturbation model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    /// Relative error level on each analog coefficient.
    pub level: f64,
    pub model: PerturbationModel,
    pub seed: u64,
}

impl PerturbationSpec {
    /// Multiplicative error factors for one realization.
    fn factors(&self, realization: u64, n: usize) -> Vec<f64> {
        let mut rng = stream(self.seed, realization, Purpose::Perturbation);
        (0..n)
            .map(|_| {
                let u: f64 = match self.model {
                    PerturbationModel::Uniform => rng.random_range(-1.0..=1.0),
                    PerturbationModel::Gaussian => StandardNormal.sample(&mut rng),
                };
                1.0 + self.level * u
            })
            .collect()
    }
}

/// QP-GP with the ideal analog stage next to the same run with every
/// coefficient perturbed. The perturbed stage is not re-projected onto the
/// power budget.
pub fn sensitivity_experiment(
    perturbation: &PerturbationSpec,
    etx_db: &[f64],
    n_channels: usize,
    n_symbols: usize,
    dims: &SystemDimensions,
    seed: u64,
    gp_cfg: &GpConfig,
) -> Result<(BerCurve, BerCurve)> {
    dims.validate()?;
    gp_cfg.validate()?;
    if !(perturbation.level >= 0.0 && perturbation.level.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "perturbation level must be non-negative, got {}",
            perturbation.level
        )));
    }
    if n_channels == 0 || n_symbols == 0 || etx_db.is_empty() {
        return Err(Error::InvalidConfig("empty sensitivity experiment".into()));
    }
    let per_realization: Vec<Result<Vec<(u64, u64)>>> = (0..n_channels as u64)
        .into_par_iter()
        .map(|k| {
            let r = realization(dims, seed, k, n_symbols);
            let factors = perturbation.factors(k, dims.n_antennas);
            etx_db
                .iter()
                .map(|&db| {
                    let d = dims.with_etx(db_to_linear(db));
                    let res = gp::gradient_projection(&r.h, &d, gp_cfg)?;
                    let ideal = res.analog.coefficients();
                    let perturbed: Vec<f64> = ideal.iter().zip(&factors).map(|(a, f)| a * f).collect();
                    let s = r.block.symbols();
                    let e0 = r
                        .block
                        .count_bit_errors(&transmit_chain(s, &res.digital, ideal, &r.h, &r.noise));
                    let e1 = r
                        .block
                        .count_bit_errors(&transmit_chain(s, &res.digital, &perturbed, &r.h, &r.noise));
                    Ok((e0, e1))
                })
                .collect()
        })
        .collect();

    let mut ideal = vec![0u64; etx_db.len()];
    let mut perturbed = vec![0u64; etx_db.len()];
    for res in per_realization {
        for (i, (e0, e1)) in res?.into_iter().enumerate() {
            ideal[i] += e0;
            perturbed[i] += e1;
        }
    }
    let bits = 2 * (dims.n_users * n_symbols * n_channels) as u64;
    let curve = |name: &str, errs: &[u64]| BerCurve {
        scheme: name.to_string(),
        seed,
        points: etx_db
            .iter()
            .zip(errs)
            .map(|(&etx_db, &errors)| BerPoint { etx_db, bits, errors })
            .collect(),
    };
    Ok((curve("qp-gp", &ideal), curve("qp-gp-perturbed", &perturbed)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub left_db: f64,
    pub right_db: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DDistribution {
    /// Every coefficient as `20 log10(d / mean(d))`.
    pub normalized_db: Vec<f64>,
    pub bins: Vec<HistogramBin>,
    /// Largest `|20 log10(d / mean(d))|`.
    pub max_deviation_db: f64,
}

impl DDistribution {
    /// Share of coefficients within `bound_db` of the mean.
    pub fn fraction_within(&self, bound_db: f64) -> f64 {
        if self.normalized_db.is_empty() {
            return 0.0;
        }
        let inside = self.normalized_db.iter().filter(|x| x.abs() <= bound_db).count();
        inside as f64 / self.normalized_db.len() as f64
    }
}

/// Coefficient ratios are floored here before taking logarithms so a
/// switched-off antenna stays finite on the dB axis.
const RATIO_FLOOR: f64 = 1e-6;

/// Histogram of analog coefficients normalized by their common mean, with
/// bins of width `bin_width_db` centred on integer multiples of the width.
pub fn coefficient_histogram(coefficients: &[f64], bin_width_db: f64) -> Result<DDistribution> {
    if !(bin_width_db > 0.0 && bin_width_db.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "bin width must be positive, got {bin_width_db}"
        )));
    }
    if coefficients.is_empty() {
        return Ok(DDistribution {
            normalized_db: Vec::new(),
            bins: Vec::new(),
            max_deviation_db: 0.0,
        });
    }
    let mean = coefficients.iter().sum::<f64>() / coefficients.len() as f64;
    let normalized_db: Vec<f64> = coefficients
        .iter()
        .map(|d| 20.0 * (d / mean).max(RATIO_FLOOR).log10())
        .collect();
    let index = |x: f64| (x / bin_width_db).round() as i64;
    let lo = normalized_db.iter().map(|&x| index(x)).min().expect("non-empty");
    let hi = normalized_db.iter().map(|&x| index(x)).max().expect("non-empty");
    let mut counts = vec![0u64; (hi - lo + 1) as usize];
    for &x in &normalized_db {
        counts[(index(x) - lo) as usize] += 1;
    }
    let bins = counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| {
            let k = lo + i as i64;
            HistogramBin {
                left_db: (k as f64 - 0.5) * bin_width_db,
                right_db: (k as f64 + 0.5) * bin_width_db,
                count,
            }
        })
        .collect();
    let max_deviation_db = normalized_db.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    Ok(DDistribution {
        normalized_db,
        bins,
        max_deviation_db,
    })
}

/// Analog coefficients of QP-GP over `n_channels` realizations at one power.
pub fn d_distribution_experiment(
    n_channels: usize,
    etx_db: f64,
    dims: &SystemDimensions,
    seed: u64,
    gp_cfg: &GpConfig,
    bin_width_db: f64,
) -> Result<DDistribution> {
    dims.validate()?;
    gp_cfg.validate()?;
    let d = dims.with_etx(db_to_linear(etx_db));
    let per_realization: Vec<Result<Vec<f64>>> = (0..n_channels as u64)
        .into_par_iter()
        .map(|k| {
            let h = draw_realization(&d, seed, k);
            Ok(gp::gradient_projection(h.matrix(), &d, gp_cfg)?
                .analog
                .coefficients()
                .to_vec())
        })
        .collect();
    let mut all = Vec::with_capacity(n_channels * dims.n_antennas);
    for r in per_realization {
        all.extend(r?);
    }
    coefficient_histogram(&all, bin_width_db)
}

/// MSE trajectory of one QP-GP run on realization 0 of `seed`.
pub fn gp_trace_experiment(etx_db: f64, dims: &SystemDimensions, seed: u64, gp_cfg: &GpConfig) -> Result<Vec<GpStep>> {
    let d = dims.with_etx(db_to_linear(etx_db));
    d.validate()?;
    let h = draw_realization(&d, seed, 0);
    let cfg = GpConfig {
        record_trajectory: true,
        ..*gp_cfg
    };
    Ok(gp::gradient_projection(h.matrix(), &d, &cfg)?
        .trajectory
        .unwrap_or_default())
}
