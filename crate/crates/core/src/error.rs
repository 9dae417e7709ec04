use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the registration engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} line {line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("index {index} out of range (count {count})")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("tetrahedron {tet} is inverted (signed volume {volume:e})")]
    InvertedTet { tet: usize, volume: f64 },

    #[error("tetrahedron {tet} is degenerate (volume {volume:e})")]
    DegenerateTet { tet: usize, volume: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("optimization diverged at level {level}, step {step}")]
    Diverged { level: usize, step: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("asset hash mismatch for {asset}: expected {expected}, found {found}")]
    HashMismatch { asset: String, expected: String, found: String },

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
