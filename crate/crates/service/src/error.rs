//! The uniform error body and the status code for each error code.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use sbpm_core::api::ErrorBody;
use sbpm_core::engine::EngineError;
use sbpm_core::explore::ExploreError;
use sbpm_core::persistence::PersistError;
use sbpm_core::violation::Violation;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody::new(code, message),
        }
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", format!("no {what} '{id}'"))
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BadRequest", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }

    pub fn semantic(violations: &[Violation]) -> Self {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: ErrorBody::new("SemanticViolation", PersistError::SemanticViolation(violations.to_vec()).to_string())
                .with_violations(violations),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<PersistError> for ApiError {
    fn from(e: PersistError) -> Self {
        match &e {
            PersistError::SemanticViolation(v) => ApiError::semantic(v),
            _ => ApiError::new(StatusCode::BAD_REQUEST, e.code(), e.to_string()),
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let status = match &e {
            EngineError::ModelInvalid(_) | EngineError::InvalidPayload { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            EngineError::BadMultiplicity(_) | EngineError::BadConfig(_) => StatusCode::BAD_REQUEST,
            EngineError::UnknownSubject(_) => StatusCode::NOT_FOUND,
            EngineError::NoReadyAgent
            | EngineError::NotRunning
            | EngineError::NotExternal(_)
            | EngineError::NoSuchChannel { .. }
            | EngineError::WitnessMismatch(_) => StatusCode::CONFLICT,
        };
        let mut body = ErrorBody::new(e.code(), e.to_string());
        if let EngineError::ModelInvalid(v) = &e {
            body = body.with_violations(v);
        }
        ApiError { status, body }
    }
}

impl From<ExploreError> for ApiError {
    fn from(e: ExploreError) -> Self {
        match e {
            ExploreError::Engine(e) => e.into(),
            ExploreError::ModelInvalid(v) => ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: ErrorBody::new("ModelInvalid", format!("model is not executable: {} violation(s)", v.len()))
                    .with_violations(&v),
            },
            ExploreError::BadBounds => ApiError::new(StatusCode::BAD_REQUEST, "BadBounds", e.to_string()),
        }
    }
}
