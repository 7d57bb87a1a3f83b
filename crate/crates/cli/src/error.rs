use std::path::PathBuf;

use tailrate_core::{AnalyticError, EstimateError, NetError, TailError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{field}: {reason}")]
    Validation { field: String, reason: String },
    #[error("unstable: mean service {service_mean} is not below mean inter-arrival {arrival_mean}")]
    Unstable { service_mean: f64, arrival_mean: f64 },
    #[error("no artifacts (summary.json) found under {0}")]
    MissingArtifacts(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Tail(#[from] TailError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("thread pool: {0}")]
    Pool(String),
}

impl CliError {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// Short tag for the stderr diagnostic.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Parse { .. } => "parse",
            CliError::Validation { .. } => "validation",
            CliError::Unstable { .. } => "unstable",
            CliError::MissingArtifacts(_) => "missing-artifacts",
            CliError::Io { .. } => "io",
            CliError::Estimate(EstimateError::Unstable { .. }) | CliError::Tail(TailError::Unstable { .. }) => "unstable",
            CliError::Estimate(_) => "estimate",
            CliError::Tail(_) => "tail",
            CliError::Analytic(AnalyticError::UnstableInput { .. }) => "unstable",
            CliError::Analytic(_) => "analytic",
            CliError::Net(_) => "net",
            CliError::Pool(_) => "pool",
        }
    }
}
