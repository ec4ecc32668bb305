//! Experiment configuration, Monte Carlo execution and report emission.

use std::path::PathBuf;

use thiserror::Error;

use crate::online::OnlineError;

mod config;
mod experiment;
mod report;

pub use config::{AlgorithmChoice, ExperimentConfig, InstanceSource, ReportFormat};
pub use experiment::{
    run_bench, run_experiment, run_trial, Aggregates, BenchRow, MetricsReport, OracleSummary,
    TrialRow,
};
pub use report::{emit_report, read_json_report, render_csv, render_json};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("oracle infeasible: {0}")]
    OracleInfeasible(String),
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed report: {0}")]
    Report(String),
    #[error(transparent)]
    Online(#[from] OnlineError),
}

impl HarnessError {
    /// Process exit code: 2 for oracle infeasibility, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::OracleInfeasible(_) => 2,
            _ => 1,
        }
    }
}
