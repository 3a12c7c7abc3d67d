//! Command implementations behind the `stagekit` binary. Each subcommand
//! reads one section of a declarative config file, writes its artifacts
//! into an output directory, and records a run manifest alongside them.

pub mod commands;
pub mod config;
pub mod manifest;

use stagekit::classify::ClassifyError;
use stagekit::inference::InferenceError;
use stagekit::ingest::IngestError;
use stagekit::insights::InsightError;
use stagekit::stats::StatsError;
use stagekit::taxonomy::TaxonomyError;
use thiserror::Error;

/// Failure classes with stable exit codes so scripts can branch on them:
/// 1 usage/config, 2 data integrity, 3 backend failure.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Backend(_) => 3,
        }
    }
}

impl From<TaxonomyError> for CliError {
    fn from(e: TaxonomyError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<InsightError> for CliError {
    fn from(e: InsightError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::Config(_) => CliError::Usage(e.to_string()),
            InferenceError::Transport(_) | InferenceError::Protocol(_) => {
                CliError::Backend(e.to_string())
            }
            InferenceError::CassetteMiss { .. } | InferenceError::Cassette { .. } => {
                CliError::Data(e.to_string())
            }
        }
    }
}

impl From<ClassifyError> for CliError {
    fn from(e: ClassifyError) -> Self {
        match e {
            ClassifyError::Config(_) | ClassifyError::Template { .. } => {
                CliError::Usage(e.to_string())
            }
            ClassifyError::Inference(inner) => inner.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn io_data(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}
