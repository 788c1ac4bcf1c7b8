use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use nnm_core::{EvalError, SessionError, SimilarityError};
use serde_json::json;

use crate::store::StoreError;

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::InvalidId(_) => StatusCode::BAD_REQUEST,
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::Corrupt { .. } | StoreError::Io(_) => {
                tracing::error!(error = %e, "session store failure");
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        Self::new(status, e.to_string())
    }
}

fn similarity_status(e: &SimilarityError) -> StatusCode {
    match e {
        SimilarityError::EmptyText | SimilarityError::ZeroK => StatusCode::BAD_REQUEST,
        SimilarityError::NoCandidates => StatusCode::CONFLICT,
        SimilarityError::Embedder(_) | SimilarityError::Dimension { .. } => StatusCode::BAD_GATEWAY,
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match &e {
            SessionError::UnknownFragment(_) => StatusCode::NOT_FOUND,
            SessionError::NoScript => StatusCode::CONFLICT,
            SessionError::Backend { .. } => StatusCode::BAD_GATEWAY,
            SessionError::Graph(_) | SessionError::Layout(_) => StatusCode::UNPROCESSABLE_ENTITY,
            SessionError::Similarity(s) | SessionError::Eval(EvalError::Similarity(s)) => similarity_status(s),
            SessionError::Eval(EvalError::NoTopics) => StatusCode::CONFLICT,
            SessionError::Eval(_) => StatusCode::UNPROCESSABLE_ENTITY,
            SessionError::Json(_) => StatusCode::BAD_REQUEST,
        };
        Self::new(status, e.to_string())
    }
}

impl From<tokio::task::JoinError> for ApiError {
    fn from(e: tokio::task::JoinError) -> Self {
        tracing::error!(error = %e, "request task failed");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal error")
    }
}
