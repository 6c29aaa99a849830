//! Configuration, run-log persistence, case comparison and channel audits.

mod config;
mod runlog;
mod validate;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{
    known_keys, parse_config, parse_config_str, suggest, ConfigError, DatasetKind,
    ExperimentConfig, InterferenceModel, ModelChoice, Normalize, PartitionKind, REQUIRED_KEYS,
};
pub use runlog::{
    compare_cases, read_jsonl, write_csv, write_merged_csv, write_run_log, LogLine, RunLogPaths,
    CSV_HEADER, MERGED_CSV_HEADER,
};
pub use validate::{
    validate_channel, ChannelGrid, ValidationReport, ValidationRow, VALIDATION_CSV_HEADER,
};

use crate::channel::ChannelError;
use crate::orchestrator::OrchestratorError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}
