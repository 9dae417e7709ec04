use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use thiserror::Error;

/// Startup and engine errors.
#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("malformed asset directory: {0}")]
    Assets(String),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Serve(#[source] std::io::Error),
    #[error(transparent)]
    Engine(#[from] tetreg::Error),
}

/// Request failures, rendered as `{"error": code, "message": text}`.
#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Gone(String),
    #[error("session is busy with another job")]
    Busy,
    #[error("{0}")]
    Unprocessable(String),
    #[error("session limit of {0} reached")]
    TooManySessions(usize),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Gone(_) => StatusCode::GONE,
            ApiError::Busy => StatusCode::CONFLICT,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::TooManySessions(_) => StatusCode::TOO_MANY_REQUESTS,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ApiError::NotFound(_) => "not_found",
            ApiError::Gone(_) => "gone",
            ApiError::Busy => "busy",
            ApiError::Unprocessable(_) => "unprocessable",
            ApiError::TooManySessions(_) => "too_many_sessions",
            ApiError::Internal(_) => "internal",
        }
    }
}

impl From<tetreg::Error> for ApiError {
    fn from(e: tetreg::Error) -> Self {
        use tetreg::Error as E;
        match e {
            E::InvalidInput(_)
            | E::NonFinite(_)
            | E::LengthMismatch { .. }
            | E::IndexOutOfRange { .. }
            | E::Degenerate(_)
            | E::Json { .. }
            | E::HashMismatch { .. } => ApiError::Unprocessable(e.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Json(json!({ "error": self.code(), "message": self.to_string() }));
        (self.status(), body).into_response()
    }
}
