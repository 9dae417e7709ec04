use std::path::PathBuf;

use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Engine(#[from] tetreg::Error),
    #[error(transparent)]
    Service(#[from] tetreg_service::ServiceError),
}

impl CliError {
    /// Stable machine-readable category.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Io { .. } | CliError::Engine(tetreg::Error::Io { .. }) => "io",
            CliError::Engine(tetreg::Error::Parse { .. } | tetreg::Error::Json { .. }) => "parse",
            CliError::Engine(tetreg::Error::LengthMismatch { .. }) => "shape_mismatch",
            CliError::Engine(_) => "engine",
            CliError::Service(tetreg_service::ServiceError::Bind { .. }) => "port_busy",
            CliError::Service(tetreg_service::ServiceError::Assets(_)) => "assets",
            CliError::Service(_) => "service",
        }
    }

    /// One-line JSON written to stderr on failure.
    pub fn to_json(&self) -> String {
        json!({ "error": self.code(), "message": self.to_string() }).to_string()
    }
}
