use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use thiserror::Error;

use crate::api::{ErrorBody, ErrorDetail};

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("session {0:?} not found")]
    SessionNotFound(String),
    #[error("model {0:?} not found")]
    ModelNotFound(String),
    #[error("position {0:?} mm is outside the field of view")]
    OutsideFov([f64; 3]),
    #[error("revision {requested} requested but the session is at {current}")]
    StaleRevision { requested: u64, current: u64 },
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            Self::SessionNotFound(_) | Self::ModelNotFound(_) => StatusCode::NOT_FOUND,
            Self::OutsideFov(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Self::StaleRevision { .. } => StatusCode::CONFLICT,
            Self::BadRequest(_) => StatusCode::BAD_REQUEST,
            Self::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Self::SessionNotFound(_) => "session_not_found",
            Self::ModelNotFound(_) => "model_not_found",
            Self::OutsideFov(_) => "outside_fov",
            Self::StaleRevision { .. } => "stale_revision",
            Self::BadRequest(_) => "bad_request",
            Self::Internal(_) => "internal",
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if matches!(self, Self::Internal(_)) {
            log::error!("{self}");
        }
        let body = ErrorBody { error: ErrorDetail { code: self.code().into(), message: self.to_string() } };
        (self.status(), Json(body)).into_response()
    }
}
