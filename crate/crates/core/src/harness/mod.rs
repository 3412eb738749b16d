//! Run configuration, execution, presets and CSV output.

mod config;
mod csvio;
pub mod experiments;
mod presets;
mod run;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::diagnostics::{DiagError, RunTrace};
use crate::matrixcore::MatrixError;
use crate::models::ModelError;
use crate::optim::OptimError;

pub use config::{Method, ModelSpec, Rescale, RunConfig, Schedule};
pub use csvio::{
    csv_bytes, emit_csv, emit_summary, fmt_float, load_csv, parse_csv, summary_from_rows,
    trace_rows, write_csv, write_summary, CsvRow, SummaryRow, CSV_HEADER, SUMMARY_HEADER,
};
pub use presets::{ablation_runs, fixture, preset, PresetBundle, FIXTURE_NAMES, PRESET_NAMES};
pub use run::run;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Diag(#[from] DiagError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("non-finite weights at step {step}")]
    NonFinite { step: u64, trace: Box<RunTrace> },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(String),
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code: 2 for a non-finite abort, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::NonFinite { .. } => 2,
            _ => 1,
        }
    }
}

/// Runs every config of a bundle and writes `<id>.csv` per run plus
/// `summary.csv` into `dir`. Runs execute concurrently; output bytes do not
/// depend on scheduling.
pub fn run_bundle(configs: &[RunConfig], dir: &Path) -> Result<Vec<RunTrace>, HarnessError> {
    use rayon::prelude::*;
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let traces: Vec<Result<RunTrace, HarnessError>> = configs.par_iter().map(run).collect();
    let mut done = Vec::with_capacity(traces.len());
    let mut first_err = None;
    for (cfg, res) in configs.iter().zip(traces) {
        let trace = match res {
            Ok(t) => t,
            Err(HarnessError::NonFinite { step, trace }) => {
                emit_csv(&trace, &dir.join(format!("{}.csv", cfg.id)))?;
                first_err.get_or_insert(HarnessError::NonFinite { step, trace });
                continue;
            }
            Err(e) => return Err(e),
        };
        emit_csv(&trace, &dir.join(format!("{}.csv", cfg.id)))?;
        cfg.save(&dir.join(format!("{}.toml", cfg.id)))?;
        done.push(trace);
    }
    let rows: Vec<SummaryRow> = done.iter().map(SummaryRow::from_trace).collect();
    emit_summary(&rows, &dir.join("summary.csv"))?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(done),
    }
}
