//! Command-line front end for the 1-bit precoding simulator: configuration
//! parsing, experiment dispatch and plot-ready CSV/JSON output.

pub mod config;
pub mod emit;

pub use config::{parse_config, ConfigError, ExperimentConfig, ExperimentKind, OutputFormat};
pub use emit::{embedded_config, run_and_emit, Report, RunError};
