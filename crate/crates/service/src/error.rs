use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use thiserror::Error;

use crate::api::ErrorBody;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("no session with id {0}")]
    NotFound(String),
    #[error("token {0} does not name the pending question")]
    StaleToken(String),
    #[error("the session is finished")]
    Finished,
    #[error("invalid answer: {0}")]
    InvalidAnswer(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("engine failure: {0}")]
    Engine(#[from] elicit_core::Error),
    #[error("storage failure: {0}")]
    Storage(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    pub fn reason(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) => "session_not_found",
            ServiceError::StaleToken(_) => "stale_token",
            ServiceError::Finished => "session_finished",
            ServiceError::InvalidAnswer(_) => "invalid_answer",
            ServiceError::InvalidRequest(_) => "invalid_request",
            ServiceError::Engine(_) => "engine_failure",
            ServiceError::Storage(_) => "storage_failure",
            ServiceError::Internal(_) => "internal_error",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::StaleToken(_) | ServiceError::Finished => StatusCode::CONFLICT,
            ServiceError::InvalidAnswer(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Engine(_) | ServiceError::Storage(_) | ServiceError::Internal(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        ServiceError::Storage(e.to_string())
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            reason: self.reason().into(),
            message: self.to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;
