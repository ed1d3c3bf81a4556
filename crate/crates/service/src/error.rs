use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use mvrs_core::embedding::EmbedError;
use mvrs_core::retrieval::RetrievalError;
use serde_json::json;

/// An error response: `{"error": {"code", "message"}}` with a status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            log::error!("{}: {}", self.code, self.message);
        }
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

impl From<EmbedError> for ApiError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::ProviderUnavailable { .. } => Self::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "embedder_unavailable",
                e.to_string(),
            ),
            EmbedError::Argument(_) | EmbedError::ZeroNorm => Self::bad_request(e.to_string()),
            EmbedError::Protocol(_) => {
                Self::new(StatusCode::BAD_GATEWAY, "embedder_protocol", e.to_string())
            }
            EmbedError::Config(_) => Self::internal(e.to_string()),
        }
    }
}

impl From<RetrievalError> for ApiError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::Embed(e) => e.into(),
            RetrievalError::Index(e) => Self::bad_request(e.to_string()),
            RetrievalError::Argument(m) => Self::bad_request(m),
            RetrievalError::UnknownVideo(_) => Self::internal(e.to_string()),
        }
    }
}

impl From<tokio::task::JoinError> for ApiError {
    fn from(e: tokio::task::JoinError) -> Self {
        Self::internal(format!("worker task failed: {e}"))
    }
}
