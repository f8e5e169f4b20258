//! Instance generation, experiment orchestration and result emission for the
//! `hgfc` scheduling library.

pub mod config;
pub mod experiment;

pub use config::{gen_instance, Algorithm, BenchmarkChoice, CostKind, ExperimentConfig};
pub use experiment::{
    run_experiment, run_sweep, verify_dir, write_bundle, Bundle, LedgerSummary, SummaryRow, VerifyOutcome,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Hgfc(#[from] hgfc::error::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("instance {instance}: {source}")]
    Trial { instance: String, source: Box<CliError> },
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().display().to_string(), source }
    }
}
