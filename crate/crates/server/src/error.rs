//! Wire-level error type. Every failure leaves the server as `{code, message, details?}`.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::{json, Value};
use sketch_core::binder::BinderError;
use sketch_core::session::ProjectError;
use sketch_core::GraphError;

#[derive(Debug, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Option<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            details: None,
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn unknown_canvas(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_canvas", format!("no open canvas `{id}`"))
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn path_escape(path: &str) -> Self {
        Self::new(StatusCode::FORBIDDEN, "path_escape", format!("`{path}` is outside the project root"))
    }

    pub fn io(err: &std::io::Error, what: &str) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "io_error", format!("{what}: {err}"))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<GraphError> for ApiError {
    fn from(e: GraphError) -> Self {
        let details = match &e {
            GraphError::InvalidParams(v) => Some(json!({ "violations": v })),
            GraphError::WouldCreateCycle { src, dst }
            | GraphError::DuplicateEdge { src, dst }
            | GraphError::UnknownEdge { src, dst } => Some(json!({ "src": src, "dst": dst })),
            _ => None,
        };
        Self {
            status: StatusCode::CONFLICT,
            code: e.code(),
            message: e.to_string(),
            details,
        }
    }
}

impl From<BinderError> for ApiError {
    fn from(e: BinderError) -> Self {
        let status = match e {
            BinderError::UnknownKernel(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::CONFLICT,
        };
        let details = match &e {
            BinderError::ValidationFailed(d) => Some(json!({ "diagnostics": d })),
            _ => None,
        };
        Self {
            status,
            code: e.code(),
            message: e.to_string(),
            details,
        }
    }
}

impl From<ProjectError> for ApiError {
    fn from(e: ProjectError) -> Self {
        let status = match &e {
            ProjectError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                StatusCode::NOT_FOUND
            }
            ProjectError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::CONFLICT,
        };
        Self {
            status,
            code: e.code(),
            message: e.to_string(),
            details: None,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "code": self.code, "message": self.message });
        if let Some(d) = self.details {
            body["details"] = d;
        }
        (self.status, Json(body)).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
