use arginote_core::engine::{HubError, Rejection};
use arginote_core::Violation;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde::Serialize;

/// The one error shape every endpoint shares.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub error: &'static str,
    pub detail: String,
    pub violations: Vec<Violation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, error: &'static str, detail: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody { error, detail: detail.into(), violations: Vec::new(), request_id: None },
        }
    }

    pub fn not_found(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", detail)
    }

    pub fn malformed(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "MalformedRequest", detail)
    }

    pub fn invalid(violations: Vec<Violation>) -> Self {
        let status = if violations.iter().any(|v| matches!(v, Violation::PayloadTooLarge { .. })) {
            StatusCode::PAYLOAD_TOO_LARGE
        } else if violations.iter().any(|v| matches!(v, Violation::FinalAlreadyExists)) {
            StatusCode::CONFLICT
        } else {
            StatusCode::BAD_REQUEST
        };
        let rejection = Rejection::Invalid(violations);
        let mut err = Self::new(status, rejection.code(), rejection.to_string());
        err.body.violations = match rejection {
            Rejection::Invalid(v) => v,
            _ => unreachable!(),
        };
        err
    }

    pub fn with_request_id(mut self, id: Option<String>) -> Self {
        self.body.request_id = id;
        self
    }
}

impl From<HubError> for ApiError {
    fn from(err: HubError) -> Self {
        match err {
            HubError::Rejected(Rejection::Invalid(v)) => ApiError::invalid(v),
            HubError::Rejected(r) => {
                let status = match &r {
                    Rejection::UnknownSession(_) | Rejection::UnknownTeam(_) => StatusCode::NOT_FOUND,
                    Rejection::Evaluation(_) | Rejection::UnknownMember(_) | Rejection::InvalidName(_) => {
                        StatusCode::BAD_REQUEST
                    }
                    Rejection::SessionExists(_) | Rejection::NoSessionReserved => StatusCode::INTERNAL_SERVER_ERROR,
                    Rejection::Invalid(_) => unreachable!(),
                };
                ApiError::new(status, r.code(), r.to_string())
            }
            HubError::Storage(e) => {
                tracing::error!(error = %e, "append failed");
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "StorageFailure", e.to_string())
            }
            HubError::Corrupt { .. } => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "CorruptLog", err.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        crate::canonical_json(self.status, &self.body)
    }
}
