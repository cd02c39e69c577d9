use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use onebit_precoding::sim::{self, BerCurve, BerExperiment, PerturbationSpec};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ExperimentConfig, ExperimentKind, OutputFormat};

pub const GENERATOR: &str = "onebit-sim";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Prefix of the CSV comment line carrying the resolved configuration.
pub const CONFIG_PREFIX: &str = "# config: ";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("simulation failed: {0}")]
    Simulation(#[from] onebit_precoding::Error),

    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Simulation(_) => 5,
            RunError::Output { .. } => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub path: PathBuf,
    pub rows: usize,
    pub summary: BTreeMap<&'static str, f64>,
}

#[derive(Debug, Serialize)]
struct BerRow {
    scheme: String,
    etx_db: f64,
    ber: f64,
    bits: u64,
    errors: u64,
    stderr: f64,
}

#[derive(Debug, Serialize)]
struct BinRow {
    bin_left_db: f64,
    bin_right_db: f64,
    count: u64,
}

#[derive(Debug, Serialize)]
struct TraceRow {
    iteration: usize,
    mse: f64,
}

#[derive(Serialize)]
struct Metadata<'a> {
    generator: &'static str,
    version: &'static str,
    seed: u64,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    summary: &'a BTreeMap<&'static str, f64>,
    config: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct Document<'a, R> {
    metadata: Metadata<'a>,
    rows: &'a [R],
}

fn ber_rows(curves: &[BerCurve]) -> Vec<BerRow> {
    curves
        .iter()
        .flat_map(|c| {
            c.points.iter().map(|p| BerRow {
                scheme: c.scheme.clone(),
                etx_db: p.etx_db,
                ber: p.ber(),
                bits: p.bits,
                errors: p.errors,
                stderr: p.stderr(),
            })
        })
        .collect()
}

fn encode<R: Serialize>(rows: &[R], meta: Metadata<'_>, format: OutputFormat) -> Vec<u8> {
    match format {
        OutputFormat::Json => {
            let mut out =
                serde_json::to_vec_pretty(&Document { metadata: meta, rows }).expect("result rows serialize to JSON");
            out.push(b'\n');
            out
        }
        OutputFormat::Csv => {
            let mut out = format!(
                "# generator: {} {}\n# seed: {}\n",
                meta.generator, meta.version, meta.seed
            );
            for (k, v) in meta.summary {
                out.push_str(&format!("# {k}: {v}\n"));
            }
            out.push_str(CONFIG_PREFIX);
            out.push_str(&serde_json::to_string(meta.config).expect("config serializes to JSON"));
            out.push('\n');
            let mut w = csv::Writer::from_writer(out.into_bytes());
            for r in rows {
                w.serialize(r).expect("result rows serialize to CSV");
            }
            w.into_inner().expect("in-memory CSV buffer flushes")
        }
    }
}

fn write_out<R: Serialize>(
    cfg: &ExperimentConfig,
    rows: &[R],
    summary: BTreeMap<&'static str, f64>,
) -> Result<Report, RunError> {
    let meta = Metadata {
        generator: GENERATOR,
        version: VERSION,
        seed: cfg.seed,
        summary: &summary,
        config: cfg,
    };
    let bytes = encode(rows, meta, cfg.format);
    fs::write(&cfg.out, bytes).map_err(|source| RunError::Output {
        path: cfg.out.clone(),
        source,
    })?;
    Ok(Report {
        path: cfg.out.clone(),
        rows: rows.len(),
        summary,
    })
}

/// Runs the configured experiment and writes its result table to `cfg.out`.
pub fn run_and_emit(cfg: &ExperimentConfig) -> Result<Report, RunError> {
    let dims = cfg
        .dims()
        .map_err(|e| onebit_precoding::Error::InvalidConfig(e.to_string()))?;
    let gp = cfg.gp();
    match cfg.experiment {
        ExperimentKind::Ber => {
            let curves = sim::ber_experiment(&BerExperiment {
                schemes: cfg.schemes.clone(),
                etx_db: cfg.etx.clone(),
                n_channels: cfg.channels,
                n_symbols: cfg.symbols,
                dims,
                seed: cfg.seed,
                gp,
            })?;
            write_out(cfg, &ber_rows(&curves), BTreeMap::new())
        }
        ExperimentKind::Sensitivity => {
            let spec = PerturbationSpec {
                level: cfg.perturb_level,
                model: cfg.perturb_model,
                seed: cfg.perturb_seed,
            };
            let (ideal, perturbed) =
                sim::sensitivity_experiment(&spec, &cfg.etx, cfg.channels, cfg.symbols, &dims, cfg.seed, &gp)?;
            write_out(cfg, &ber_rows(&[ideal, perturbed]), BTreeMap::new())
        }
        ExperimentKind::DDistribution => {
            let dist = sim::d_distribution_experiment(cfg.channels, cfg.etx[0], &dims, cfg.seed, &gp, cfg.bin_width)?;
            let rows: Vec<BinRow> = dist
                .bins
                .iter()
                .map(|b| BinRow {
                    bin_left_db: b.left_db,
                    bin_right_db: b.right_db,
                    count: b.count,
                })
                .collect();
            let summary = BTreeMap::from([
                ("max_deviation_db", dist.max_deviation_db),
                ("fraction_within_6db", dist.fraction_within(6.0)),
            ]);
            write_out(cfg, &rows, summary)
        }
        ExperimentKind::GpTrace => {
            let steps = sim::gp_trace_experiment(cfg.etx[0], &dims, cfg.seed, &gp)?;
            let rows: Vec<TraceRow> = steps
                .iter()
                .enumerate()
                .map(|(iteration, s)| TraceRow { iteration, mse: s.mse })
                .collect();
            write_out(cfg, &rows, BTreeMap::new())
        }
    }
}

/// Extracts the embedded configuration JSON from an emitted CSV or JSON file.
pub fn embedded_config(text: &str) -> Option<String> {
    if let Some(line) = text.lines().find_map(|l| l.strip_prefix(CONFIG_PREFIX)) {
        return Some(line.to_string());
    }
    let doc: serde_json::Value = serde_json::from_str(text).ok()?;
    Some(doc.get("metadata")?.get("config")?.to_string())
}

/// The data section of an emitted CSV file: everything but the comment lines.
pub fn csv_data_section(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}
