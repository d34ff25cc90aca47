use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

use statevc_core::model::CheckoutClass;
use statevc_core::search::QueryError;
use statevc_core::session::SessionError;
use statevc_core::store::StoreError;

/// Every `code` an error response can carry.
pub const ERROR_CODES: &[&str] = &[
    "bad_request",
    "bad_query",
    "unknown_commit",
    "ambiguous_commit",
    "unknown_cell",
    "not_code_cell",
    "invalid_index",
    "unsafe_only_code",
    "unsafe_future_data",
    "unsafe_unrelated_data",
    "storage_error",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkout_class: Option<CheckoutClass>,
}

impl ApiError {
    fn new(code: &'static str, message: impl Into<String>) -> ApiError {
        debug_assert!(ERROR_CODES.contains(&code));
        ApiError {
            code: code.to_string(),
            message: message.into(),
            checkout_class: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> ApiError {
        ApiError::new("bad_request", message)
    }

    pub fn rejected(class: CheckoutClass) -> ApiError {
        ApiError {
            checkout_class: Some(class),
            ..ApiError::new(class.code(), format!("{class}: {}", class.explanation()))
        }
    }

    pub fn status(&self) -> StatusCode {
        match self.code.as_str() {
            "unknown_commit" | "unknown_cell" => StatusCode::NOT_FOUND,
            "storage_error" => StatusCode::INTERNAL_SERVER_ERROR,
            _ if self.checkout_class.is_some() => StatusCode::CONFLICT,
            _ => StatusCode::BAD_REQUEST,
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> ApiError {
        let code = match e {
            StoreError::UnknownCommit(_) => "unknown_commit",
            StoreError::AmbiguousCommit(_) => "ambiguous_commit",
            _ => "storage_error",
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> ApiError {
        let code = match e {
            SessionError::Rejected(class) => return ApiError::rejected(class),
            SessionError::Store(e) => return e.into(),
            SessionError::UnknownCell(_) => "unknown_cell",
            SessionError::NotCodeCell(_) => "not_code_cell",
            SessionError::InvalidIndex(_) => "invalid_index",
            SessionError::EmptyStore => "storage_error",
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> ApiError {
        ApiError::new("bad_query", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self)).into_response()
    }
}
