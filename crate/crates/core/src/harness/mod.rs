//! Batch experiment drivers. Each experiment is a pure function of its
//! configuration: trials run in parallel on per-trial derived seeds and rows
//! are emitted in trial order.

mod config;
mod coverage;
mod elpd;
mod infogain;
mod regret;
mod table;

pub use config::{ConfigOverrides, Experiment, ExperimentConfig, ModelKind, OracleKind};
pub use coverage::run_coverage;
pub use elpd::{run_elpd, DesignRule};
pub use infogain::run_infogain;
pub use regret::run_regret;
pub use table::{metadata_path, write_csv, write_with_metadata, Cell, Table};

use std::path::PathBuf;

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::{Error, Result};

/// A results table and the run's metadata (configuration, benchmarks,
/// summary statistics).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub table: Table,
    pub metadata: Value,
}

/// Runs the configured experiment.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    match config.experiment {
        Experiment::Infogain => run_infogain(config),
        Experiment::Coverage => run_coverage(config, &config.levels),
        Experiment::Elpd => run_elpd(config, &[DesignRule::Random, DesignRule::Optimal]),
        Experiment::Regret => run_regret(config),
    }
}

/// Runs the experiment and writes the CSV plus metadata sidecar to
/// `config.output` (or `<experiment>.csv`); returns the CSV path.
pub fn run_and_write(config: &ExperimentConfig) -> Result<PathBuf> {
    let out = run(config)?;
    let path = config
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", config.experiment.name())));
    write_with_metadata(&out.table, &out.metadata, &path)?;
    Ok(path)
}

/// `f(t)` for every trial, in parallel, collected in trial order.
pub(crate) fn par_trials<T, F>(trials: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|t| f(t).map_err(|e| e.context(format!("trial {t}"))))
        .collect()
}

pub(crate) fn format_design(xi: &[f64]) -> String {
    xi.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(";")
}

pub(crate) fn base_metadata(config: &ExperimentConfig) -> Value {
    json!({
        "experiment": config.experiment.name(),
        "config": config,
        "units": "nats",
        "assumptions": {
            "regularity_constants": "L_f = L_h = C_h = sigma_w = 1 (not estimated)",
        },
    })
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub(crate) fn std_error(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return f64::NAN;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
}

pub(crate) fn insert(meta: &mut Value, key: &str, value: Value) {
    meta.as_object_mut().expect("metadata is an object").insert(key.to_string(), value);
}

pub(crate) fn require_linreg_design_dim(config: &ExperimentConfig) -> Result<()> {
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    Ok(())
}
