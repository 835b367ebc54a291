//! Command-line experiments: configuration, drivers and result files.

pub mod config;
pub mod experiments;
pub mod props;
pub mod record;
pub mod zoo;

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::GeomError;
use config::{Config, ConfigError};
use record::ExperimentRecord;

pub const EXPERIMENTS: &[&str] = &["props", "ellpos", "regpos", "sections", "lowmstar", "qs", "curve"];

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error("cannot write results: {0}")]
    Io(#[from] std::io::Error),
}

impl From<ConfigError> for HarnessError {
    fn from(e: ConfigError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl HarnessError {
    /// 2 for bad input, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Geometry(
                GeomError::InvalidParameter(_)
                | GeomError::DimensionMismatch { .. }
                | GeomError::NotTractable(_)
                | GeomError::Degenerate(_)
                | GeomError::NonFinite,
            ) => 2,
            _ => 1,
        }
    }
}

/// Runs `experiment` and returns its records.
pub fn run_experiment(experiment: &str, cfg: &Config, seed: u64) -> Result<Vec<ExperimentRecord>, HarnessError> {
    let mut records = match experiment {
        "props" => props::run_props(cfg, seed)?,
        "ellpos" => experiments::run_ellpos(cfg, seed)?,
        "regpos" => experiments::run_regpos(cfg, seed)?,
        "sections" => experiments::run_sections(cfg, seed)?,
        "lowmstar" => experiments::run_lowmstar(cfg, seed)?,
        "qs" => experiments::run_qs(cfg, seed)?,
        "curve" => experiments::run_curve(cfg, seed)?,
        other => return Err(HarnessError::Config(format!("unknown experiment {other:?}"))),
    };
    if cfg.timestamps {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).ok();
        records.iter_mut().for_each(|r| r.timestamp_unix = now);
    }
    Ok(records)
}

/// Runs `experiment`, writes `<experiment>.jsonl` and `<experiment>.csv`
/// into `out`, and returns the records.
pub fn run_and_write(experiment: &str, cfg: &Config, seed: u64, out: &Path) -> Result<Vec<ExperimentRecord>, HarnessError> {
    let records = run_experiment(experiment, cfg, seed)?;
    record::write_outputs(out, experiment, &records)?;
    Ok(records)
}
