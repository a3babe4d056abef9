use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("integration failed at t = {last_time}: {reason}")]
    IntegrationFailure { last_time: f64, reason: String },

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("fit failed: all {n_starts} starts failed ({})", .diagnostics.join("; "))]
    FitFailure {
        n_starts: usize,
        diagnostics: Vec<String>,
    },

    #[error("design violation: {0}")]
    DesignViolation(String),

    #[error("bootstrap unreliable: {failed} of {total} refits failed")]
    Reliability { failed: usize, total: usize },

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("labeling error: {0}")]
    Labeling(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::IntegrationFailure { .. } => "integration-failure",
            Error::Evaluation(_) => "evaluation",
            Error::FitFailure { .. } => "fit-failure",
            Error::DesignViolation(_) => "design-violation",
            Error::Reliability { .. } => "reliability",
            Error::Resource(_) => "resource",
            Error::Labeling(_) => "labeling",
            Error::Parse { .. } => "parse",
            Error::EmptyInput(_) => "empty-input",
            Error::Validation(_) => "validation",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
