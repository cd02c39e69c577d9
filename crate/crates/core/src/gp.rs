//! Gradient projection for the two-stage precoder.
//!
//! Starting from `P0 = H^H` scaled into the power ball, each step moves
//! `P <- P - mu (dMSE/dP)*` and rescales back onto `tr(P P^H) <= Etx/2`. The
//! run stops once consecutive objective values differ by at most `epsilon`,
//! or after `max_iterations` updates.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::precoder::{
    self, analog_from_digital, project_power, AnalogPrecoder, DigitalPrecoder, EqualPowerObjective, SystemDimensions,
};

/// A differentiable objective over the digital precoder.
pub trait PrecoderObjective {
    fn value(&self, h: &ComplexMatrix, p: &ComplexMatrix, dims: &SystemDimensions) -> f64;

    /// Wirtinger derivative `dMSE/dP`.
    fn gradient(&self, h: &ComplexMatrix, p: &ComplexMatrix, dims: &SystemDimensions) -> ComplexMatrix;
}

/// MSE with the analog stage tied to the row norms of `P`.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuantizedMse;

impl PrecoderObjective for QuantizedMse {
    fn value(&self, h: &ComplexMatrix, p: &ComplexMatrix, dims: &SystemDimensions) -> f64 {
        precoder::mse_value_unchecked(h, p, dims)
    }

    fn gradient(&self, h: &ComplexMatrix, p: &ComplexMatrix, dims: &SystemDimensions) -> ComplexMatrix {
        precoder::mse_gradient_unchecked(h, p, dims)
    }
}

impl PrecoderObjective for EqualPowerObjective {
    fn value(&self, h: &ComplexMatrix, p: &ComplexMatrix, dims: &SystemDimensions) -> f64 {
        EqualPowerObjective::value(self, h, p, dims)
    }

    fn gradient(&self, h: &ComplexMatrix, p: &ComplexMatrix, dims: &SystemDimensions) -> ComplexMatrix {
        EqualPowerObjective::gradient(self, h, p, dims)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Initialization {
    /// `P0 = H^H`.
    #[default]
    ChannelAdjoint,
    /// i.i.d. `CN(0, 1)` entries drawn from the given seed.
    Random { seed: u64 },
}

/// How the equal-power (`D = alpha I`) variant obtains its digital precoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EqualPowerMode {
    /// Reuse the digital precoder optimized with `D = diag(P P^H)^{1/2}`.
    #[default]
    ReuseDigital,
    /// Run gradient projection on the objective with `D = alpha I` fixed.
    Reoptimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    /// Step size `mu`.
    pub step: f64,
    /// Stop once `|MSE_{n+1} - MSE_n| <= tolerance`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub record_trajectory: bool,
    pub initialization: Initialization,
    pub equal_power_mode: EqualPowerMode,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            step: 0.05,
            tolerance: 1e-6,
            max_iterations: 10_000,
            record_trajectory: false,
            initialization: Initialization::ChannelAdjoint,
            equal_power_mode: EqualPowerMode::default(),
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations < 1 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// One recorded iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpStep {
    pub mse: f64,
    /// `tr(P P^H)` of the iterate.
    pub trace_power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpResult {
    pub digital: DigitalPrecoder,
    pub analog: AnalogPrecoder,
    /// Objective at the projected starting point.
    pub initial_mse: f64,
    pub final_mse: f64,
    /// Number of gradient updates performed.
    pub iterations: usize,
    /// True iff the tolerance test fired before the iteration cap.
    pub converged: bool,
    /// Starting point followed by every update, when requested.
    pub trajectory: Option<Vec<GpStep>>,
}

/// Starting point for a run, before projection.
pub fn initial_precoder(h: &ComplexMatrix, init: Initialization) -> ComplexMatrix {
    match init {
        Initialization::ChannelAdjoint => h.adjoint(),
        Initialization::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let scale = std::f64::consts::FRAC_1_SQRT_2;
            ComplexMatrix::from_fn(h.ncols(), h.nrows(), |_, _| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re * scale, im * scale)
            })
        }
    }
}

/// Core iteration, generic over the objective. Returns the final digital
/// precoder with the run statistics; the caller picks the analog stage.
pub fn run<O: PrecoderObjective>(
    objective: &O,
    h: &ComplexMatrix,
    p0: ComplexMatrix,
    dims: &SystemDimensions,
    cfg: &GpConfig,
) -> Result<(DigitalPrecoder, RunStats)> {
    cfg.validate()?;
    dims.validate()?;
    if h.nrows() != dims.n_users || h.ncols() != dims.n_antennas {
        return Err(Error::DimensionMismatch(format!(
            "channel is {}x{}, expected {}x{}",
            h.nrows(),
            h.ncols(),
            dims.n_users,
            dims.n_antennas
        )));
    }
    if p0.nrows() != dims.n_antennas || p0.ncols() != dims.n_users {
        return Err(Error::DimensionMismatch(format!(
            "initial precoder is {}x{}, expected {}x{}",
            p0.nrows(),
            p0.ncols(),
            dims.n_antennas,
            dims.n_users
        )));
    }

    let mut p = project_power(DigitalPrecoder::new(p0), dims);
    let mut mse = objective.value(h, p.matrix(), dims);
    if !mse.is_finite() {
        return Err(Error::Diverged { iteration: 0 });
    }
    let initial_mse = mse;
    let mut trajectory = cfg.record_trajectory.then(|| {
        vec![GpStep {
            mse,
            trace_power: p.trace_power(),
        }]
    });

    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let grad = objective.gradient(h, p.matrix(), dims);
        if grad.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Diverged { iteration: iterations });
        }
        let stepped = p.matrix() - grad.conjugate() * Complex64::new(cfg.step, 0.0);
        p = project_power(DigitalPrecoder::new(stepped), dims);
        let next = objective.value(h, p.matrix(), dims);
        if !next.is_finite() {
            return Err(Error::Diverged { iteration: iterations });
        }
        if let Some(t) = trajectory.as_mut() {
            t.push(GpStep {
                mse: next,
                trace_power: p.trace_power(),
            });
        }
        let change = (next - mse).abs();
        mse = next;
        if change <= cfg.tolerance {
            converged = true;
            break;
        }
    }

    Ok((
        p,
        RunStats {
            initial_mse,
            final_mse: mse,
            iterations,
            converged,
            trajectory,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub initial_mse: f64,
    pub final_mse: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trajectory: Option<Vec<GpStep>>,
}

fn assemble(digital: DigitalPrecoder, analog: AnalogPrecoder, stats: RunStats) -> GpResult {
    GpResult {
        digital,
        analog,
        initial_mse: stats.initial_mse,
        final_mse: stats.final_mse,
        iterations: stats.iterations,
        converged: stats.converged,
        trajectory: stats.trajectory,
    }
}

/// QP-GP: optimize `P` and set `D = diag(P P^H)^{1/2}`.
pub fn gradient_projection(h: &ComplexMatrix, dims: &SystemDimensions, cfg: &GpConfig) -> Result<GpResult> {
    if h.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
        return Err(Error::InvalidConfig("channel matrix is identically zero".into()));
    }
    let p0 = initial_precoder(h, cfg.initialization);
    let (p, stats) = run(&QuantizedMse, h, p0, dims, cfg)?;
    let d = analog_from_digital(&p);
    Ok(assemble(p, d, stats))
}

/// QP-GP with equal power on every antenna, `D = sqrt(Etx / 2N) I`.
pub fn qp_gp_equal_power(h: &ComplexMatrix, dims: &SystemDimensions, cfg: &GpConfig) -> Result<GpResult> {
    match cfg.equal_power_mode {
        EqualPowerMode::ReuseDigital => {
            let mut res = gradient_projection(h, dims, cfg)?;
            res.analog = AnalogPrecoder::equal_power(dims);
            Ok(res)
        }
        EqualPowerMode::Reoptimize => {
            if h.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
                return Err(Error::InvalidConfig("channel matrix is identically zero".into()));
            }
            let p0 = initial_precoder(h, cfg.initialization);
            let (p, stats) = run(&EqualPowerObjective::new(dims), h, p0, dims, cfg)?;
            Ok(assemble(p, AnalogPrecoder::equal_power(dims), stats))
        }
    }
}
