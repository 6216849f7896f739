//! Configuration, subcommand dispatch and report emission for `fbstab`.

pub mod commands;
pub mod config;
pub mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use commands::{execute, Command};
pub use config::{Overrides, RunConfig};
pub use report::{emit, CheckRecord, ReportDocument, Series};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {field}: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn invalid(field: &str, reason: impl Into<String>) -> Self {
        CliError::ConfigInvalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Process exit status for errors raised before any check ran.
    pub fn exit_code(&self) -> i32 {
        3
    }
}

/// Result of [`run`].
#[derive(Debug)]
pub struct Outcome {
    pub report: ReportDocument,
    pub out_dir: PathBuf,
    pub exit_code: i32,
}

/// Loads the config, applies overrides, runs `cmd` and writes the report and
/// series into the output directory (or `out` when given). Wall-clock time goes
/// to `timing.json` so the report itself stays reproducible.
pub fn run(config_path: &Path, cmd: Command, overrides: Overrides, out: Option<&Path>) -> Result<Outcome, CliError> {
    let mut cfg = RunConfig::load(config_path)?;
    cfg.apply(overrides)?;
    let out_dir = out.map_or_else(|| PathBuf::from(&cfg.output.dir), Path::to_path_buf);
    let start = Instant::now();
    let (report, series) = execute(cmd, &cfg)?;
    let elapsed = start.elapsed().as_secs_f64();
    emit(&report, &series, &out_dir)?;
    let timing = serde_json::json!({ "command": cmd.name(), "wall_clock_seconds": elapsed });
    std::fs::write(out_dir.join("timing.json"), format!("{timing:#}\n"))
        .map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    let exit_code = report.exit_code();
    Ok(Outcome {
        report,
        out_dir,
        exit_code,
    })
}
