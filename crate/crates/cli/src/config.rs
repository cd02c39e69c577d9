use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Parser;
use onebit_precoding::gp::{EqualPowerMode, GpConfig};
use onebit_precoding::precoder::SystemDimensions;
use onebit_precoding::sim::{PerturbationModel, Scheme};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    /// Unknown flag, malformed flag value, `--help` or `--version`.
    #[error(transparent)]
    Usage(#[from] clap::Error),

    #[error("cannot read config file {path}: {source}")]
    FileRead {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed config file {path}: {source}")]
    FileParse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("malformed value for `{key}`: {reason}")]
    Malformed { key: &'static str, reason: String },

    #[error("inconsistent configuration: {0}")]
    Inconsistent(String),
}

impl ConfigError {
    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            ConfigError::Usage(e) => e.exit_code(),
            ConfigError::FileRead { .. } | ConfigError::FileParse { .. } => 4,
            ConfigError::Malformed { .. } => 2,
            ConfigError::Inconsistent(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Ber,
    Sensitivity,
    DDistribution,
    GpTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    fn extension(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

/// Transmit power grid in dB: `start:step:stop` (inclusive), a comma list,
/// or a single value.
pub fn parse_etx_grid(s: &str) -> Result<Vec<f64>, String> {
    let num = |t: &str| -> Result<f64, String> {
        t.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("`{}` is not a finite number", t.trim()))
    };
    let grid = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, step, stop] = parts[..] else {
            return Err(format!("range `{s}` must have the form start:step:stop"));
        };
        let (start, step, stop) = (num(start)?, num(step)?, num(stop)?);
        if step <= 0.0 {
            return Err(format!("range step must be positive, got {step}"));
        }
        if stop < start {
            return Err(format!("range stop {stop} is below start {start}"));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| start + k as f64 * step).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if grid.is_empty() {
        return Err("empty transmit power grid".into());
    }
    Ok(grid)
}

fn parse_schemes(s: &str) -> Result<Vec<Scheme>, String> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| Scheme::from_str(t).map_err(|e| e.to_string()))
        .collect()
}

/// Parsed `--etx` value.
#[derive(Debug, Clone, PartialEq)]
pub struct EtxGrid(pub Vec<f64>);

impl FromStr for EtxGrid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_etx_grid(s).map(EtxGrid)
    }
}

/// Parsed `--schemes` value.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeList(pub Vec<Scheme>);

impl FromStr for SchemeList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_schemes(s).map(SchemeList)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TextOr<T> {
    Text(String),
    One(T),
    List(Vec<T>),
}

impl<'de> Deserialize<'de> for EtxGrid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match TextOr::<f64>::deserialize(d)? {
            TextOr::Text(s) => s.parse().map_err(serde::de::Error::custom),
            TextOr::One(v) => Ok(EtxGrid(vec![v])),
            TextOr::List(v) => Ok(EtxGrid(v)),
        }
    }
}

impl<'de> Deserialize<'de> for SchemeList {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match TextOr::<String>::deserialize(d)? {
            TextOr::Text(s) | TextOr::One(s) => s.parse().map_err(serde::de::Error::custom),
            TextOr::List(v) => v
                .iter()
                .map(|s| Scheme::from_str(s).map_err(serde::de::Error::custom))
                .collect::<Result<Vec<_>, _>>()
                .map(SchemeList),
        }
    }
}

fn parse_perturb_model(s: &str) -> Result<PerturbationModel, String> {
    PerturbationModel::from_str(s).map_err(|e| e.to_string())
}

/// Flat key/value overrides, shared by the command line and config files.
#[derive(Debug, Clone, Default, Parser, Deserialize)]
#[command(
    name = "onebit-sim",
    version,
    about = "Monte Carlo BER and precoder studies for massive MIMO downlinks with 1-bit converters"
)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ConfigPatch {
    /// Flat JSON file with the same keys as the long flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub experiment: Option<ExperimentKind>,

    /// Base-station antennas N.
    #[arg(long)]
    pub antennas: Option<usize>,

    /// Single-antenna users M.
    #[arg(long)]
    pub users: Option<usize>,

    /// QPSK symbol variance.
    #[arg(long)]
    pub symbol_variance: Option<f64>,

    /// Transmit power grid in dB: start:step:stop, a comma list, or one value.
    #[arg(long)]
    pub etx: Option<EtxGrid>,

    /// Channel realizations.
    #[arg(long)]
    pub channels: Option<usize>,

    /// Symbol vectors per channel realization.
    #[arg(long)]
    pub symbols: Option<usize>,

    /// Comma-separated schemes: wf-no-quant, wf-d-i, qp-gp-d-i, qp-gp.
    #[arg(long)]
    pub schemes: Option<SchemeList>,

    /// Gradient projection step.
    #[arg(long)]
    pub mu: Option<f64>,

    /// Gradient projection tolerance on the MSE change.
    #[arg(long)]
    pub epsilon: Option<f64>,

    #[arg(long)]
    pub max_iters: Option<usize>,

    /// How QP-GP with D=I obtains its digital precoder.
    #[arg(long, value_parser = parse_equal_power_mode)]
    pub equal_power_mode: Option<EqualPowerMode>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Relative error level on the analog coefficients.
    #[arg(long)]
    pub perturb_level: Option<f64>,

    #[arg(long, value_parser = parse_perturb_model)]
    pub perturb_model: Option<PerturbationModel>,

    /// Perturbation stream seed.
    #[arg(long)]
    pub perturb_seed: Option<u64>,

    /// Histogram bin width in dB.
    #[arg(long)]
    pub bin_width: Option<f64>,

    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
}

fn parse_equal_power_mode(s: &str) -> Result<EqualPowerMode, String> {
    match s.trim() {
        "reuse-digital" | "reuse" => Ok(EqualPowerMode::ReuseDigital),
        "reoptimize" => Ok(EqualPowerMode::Reoptimize),
        other => Err(format!(
            "unknown equal-power mode `{other}` (reuse-digital | reoptimize)"
        )),
    }
}

/// Fully resolved experiment description. Serializes to the same flat keys a
/// config file accepts, so an embedded copy can be fed back with `--config`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub antennas: usize,
    pub users: usize,
    pub symbol_variance: f64,
    pub etx: Vec<f64>,
    pub channels: usize,
    pub symbols: usize,
    pub schemes: Vec<Scheme>,
    pub mu: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    pub equal_power_mode: EqualPowerMode,
    pub seed: u64,
    pub perturb_level: f64,
    pub perturb_model: PerturbationModel,
    pub perturb_seed: u64,
    pub bin_width: f64,
    pub out: PathBuf,
    pub format: OutputFormat,
}

pub const DEFAULT_SEED: u64 = 1;

impl ExperimentConfig {
    /// Defaults: N = 20, M = 4, sigma_s^2 = 2, 200 channels, 1000 symbols,
    /// mu = 0.05, epsilon = 1e-6.
    fn defaults(kind: ExperimentKind, format: OutputFormat) -> Self {
        let etx = match kind {
            ExperimentKind::Ber | ExperimentKind::Sensitivity => parse_etx_grid("0:2:20").expect("valid grid"),
            ExperimentKind::DDistribution | ExperimentKind::GpTrace => vec![10.0],
        };
        let gp = GpConfig::default();
        let stem = match kind {
            ExperimentKind::Ber => "ber",
            ExperimentKind::Sensitivity => "sensitivity",
            ExperimentKind::DDistribution => "d-distribution",
            ExperimentKind::GpTrace => "gp-trace",
        };
        Self {
            experiment: kind,
            antennas: 20,
            users: 4,
            symbol_variance: 2.0,
            etx,
            channels: 200,
            symbols: 1000,
            schemes: Scheme::IMPLEMENTED.to_vec(),
            mu: gp.step,
            epsilon: gp.tolerance,
            max_iters: gp.max_iterations,
            equal_power_mode: gp.equal_power_mode,
            seed: DEFAULT_SEED,
            perturb_level: 0.10,
            perturb_model: PerturbationModel::Uniform,
            perturb_seed: DEFAULT_SEED + 1,
            bin_width: 0.5,
            out: PathBuf::from(format!("{stem}.{}", format.extension())),
            format,
        }
    }

    fn apply(&mut self, p: &ConfigPatch) {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = &p.$field { self.$field = v.clone(); })*
            };
        }
        take!(
            antennas,
            users,
            symbol_variance,
            channels,
            symbols,
            mu,
            epsilon,
            max_iters,
            equal_power_mode,
            seed,
            perturb_level,
            perturb_model,
            perturb_seed,
            bin_width,
            out
        );
        if let Some(EtxGrid(v)) = &p.etx {
            self.etx = v.clone();
        }
        if let Some(SchemeList(v)) = &p.schemes {
            self.schemes = v.clone();
        }
    }

    pub fn dims(&self) -> Result<SystemDimensions, ConfigError> {
        let etx = onebit_precoding::sim::db_to_linear(self.etx[0]);
        SystemDimensions::new(self.antennas, self.users, self.symbol_variance, etx)
            .map_err(|e| ConfigError::Inconsistent(e.to_string()))
    }

    pub fn gp(&self) -> GpConfig {
        GpConfig {
            step: self.mu,
            tolerance: self.epsilon,
            max_iterations: self.max_iters,
            equal_power_mode: self.equal_power_mode,
            ..GpConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |s: String| Err(ConfigError::Inconsistent(s));
        if self.antennas < 1 || self.users < 1 {
            return bad("antenna and user counts must be at least 1".into());
        }
        if self.users > self.antennas {
            return bad(format!("M > N: {} users exceed {} antennas", self.users, self.antennas));
        }
        if self.channels < 1 || self.symbols < 1 {
            return bad("channel and symbol counts must be at least 1".into());
        }
        if self.etx.is_empty() || self.etx.iter().any(|v| !v.is_finite()) {
            return bad("transmit power grid must be non-empty and finite".into());
        }
        if self.etx.windows(2).any(|w| w[1] <= w[0]) {
            return bad("transmit power grid must be strictly increasing".into());
        }
        if matches!(self.experiment, ExperimentKind::DDistribution | ExperimentKind::GpTrace) && self.etx.len() != 1 {
            return bad(format!(
                "{:?} runs at a single transmit power, got {} grid points",
                self.experiment,
                self.etx.len()
            ));
        }
        if self.experiment == ExperimentKind::Ber {
            if self.schemes.is_empty() {
                return bad("no schemes requested".into());
            }
            if self.schemes.contains(&Scheme::Qwp) {
                return bad("scheme `qwp` is reserved and not implemented".into());
            }
            let mut seen = std::collections::HashSet::new();
            if let Some(s) = self.schemes.iter().find(|s| !seen.insert(**s)) {
                return bad(format!("scheme `{s}` listed twice"));
            }
        }
        if !(self.perturb_level >= 0.0 && self.perturb_level.is_finite()) {
            return bad(format!(
                "perturbation level must be non-negative, got {}",
                self.perturb_level
            ));
        }
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return bad(format!("bin width must be positive, got {}", self.bin_width));
        }
        self.gp()
            .validate()
            .map_err(|e| ConfigError::Inconsistent(e.to_string()))?;
        self.dims()?;
        Ok(())
    }
}

fn read_file(path: &PathBuf) -> Result<ConfigPatch, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::FileRead {
        path: path.clone(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ConfigError::FileParse {
        path: path.clone(),
        source,
    })
}

/// Resolves defaults, then the optional config file, then command-line flags.
pub fn parse_config<I, T>(args: I) -> Result<ExperimentConfig, ConfigError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let flags = ConfigPatch::try_parse_from(args)?;
    let file = flags.config.as_ref().map(read_file).transpose()?.unwrap_or_default();

    let kind = flags.experiment.or(file.experiment).unwrap_or(ExperimentKind::Ber);
    let format = flags.format.or(file.format).unwrap_or(OutputFormat::Csv);
    let mut cfg = ExperimentConfig::defaults(kind, format);
    cfg.apply(&file);
    cfg.apply(&flags);
    for (key, v) in [
        ("mu", cfg.mu),
        ("epsilon", cfg.epsilon),
        ("symbol-variance", cfg.symbol_variance),
    ] {
        if !v.is_finite() {
            return Err(ConfigError::Malformed {
                key,
                reason: format!("{v} is not finite"),
            });
        }
    }
    cfg.validate()?;
    Ok(cfg)
}
