use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use dtinterview_core::catalog::ResolveError;
use dtinterview_core::orchestrator::TurnError;
use dtinterview_core::report::ReportError;
use dtinterview_core::store::StoreError;
use dtinterview_core::transcription::TranscriptionError;
use dtinterview_core::workflow::WorkflowError;
use serde_json::json;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub retriable: bool,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            retriable: false,
        }
    }

    fn retriable(mut self, retriable: bool) -> Self {
        self.retriable = retriable;
        self
    }

    pub fn unauthorized() -> Self {
        Self::new(
            StatusCode::UNAUTHORIZED,
            "unauthorized",
            "missing or invalid bearer token",
        )
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn unprocessable(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "error": { "code": self.code, "message": self.message, "retriable": self.retriable }
        });
        (self.status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::new(e.status(), "invalid_body", e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_query", e.body_text())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        match e {
            StoreError::NotFound(_) => Self::new(StatusCode::NOT_FOUND, "not_found", message),
            StoreError::Busy(_) => Self::new(StatusCode::CONFLICT, "turn_in_flight", message).retriable(true),
            StoreError::Completed(_) => Self::new(StatusCode::CONFLICT, "session_completed", message),
            StoreError::SequenceConflict { .. } => {
                Self::new(StatusCode::CONFLICT, "sequence_conflict", message).retriable(true)
            }
            StoreError::InvalidProfile(_) => Self::unprocessable("invalid_profile", message),
            StoreError::InvalidReport(_) => Self::new(StatusCode::BAD_GATEWAY, "invalid_provider_output", message),
            other => {
                tracing::error!(error = %other, "storage failure");
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_failure", "storage failure")
            }
        }
    }
}

impl From<TurnError> for ApiError {
    fn from(e: TurnError) -> Self {
        let message = e.to_string();
        let retriable = e.is_retriable();
        match e {
            TurnError::Store(inner) => inner.into(),
            TurnError::EmptyInput => Self::unprocessable("empty_input", message),
            TurnError::SessionCompleted(_) => Self::new(StatusCode::CONFLICT, "session_completed", message),
            TurnError::Provider(ref p) => {
                tracing::warn!(status = ?p.status(), "provider failure during turn");
                Self::new(StatusCode::BAD_GATEWAY, "provider_error", message).retriable(retriable)
            }
            TurnError::ToolBudgetExceeded { .. }
            | TurnError::UnknownTool(_)
            | TurnError::MalformedArguments(_)
            | TurnError::EmptyReply => Self::new(StatusCode::BAD_GATEWAY, "turn_aborted", message).retriable(retriable),
        }
    }
}

impl From<TranscriptionError> for ApiError {
    fn from(e: TranscriptionError) -> Self {
        let message = e.to_string();
        match e {
            TranscriptionError::EmptyPayload => Self::unprocessable("empty_input", message),
            TranscriptionError::UnsupportedMediaType(_) => {
                Self::new(StatusCode::UNSUPPORTED_MEDIA_TYPE, "unsupported_media_type", message)
            }
            TranscriptionError::TooLarge { .. } => {
                Self::new(StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large", message)
            }
            TranscriptionError::Provider(p) => {
                let retriable = matches!(
                    p,
                    dtinterview_core::transcription::SttError::Transport { retriable: true, .. }
                );
                Self::new(StatusCode::BAD_GATEWAY, "transcription_error", p.to_string()).retriable(retriable)
            }
        }
    }
}

impl From<ReportError> for ApiError {
    fn from(e: ReportError) -> Self {
        let message = e.to_string();
        match e {
            ReportError::NothingAnswered => Self::unprocessable("nothing_answered", message),
            ReportError::Provider(p) => {
                Self::new(StatusCode::BAD_GATEWAY, "provider_error", message).retriable(p.is_retriable())
            }
            ReportError::InvalidOutput(_) => {
                Self::new(StatusCode::BAD_GATEWAY, "invalid_provider_output", message).retriable(true)
            }
            ReportError::Store(inner) => inner.into(),
        }
    }
}

impl From<WorkflowError> for ApiError {
    fn from(e: WorkflowError) -> Self {
        let message = e.to_string();
        match e {
            WorkflowError::WrongPhase { .. } => Self::new(StatusCode::CONFLICT, "wrong_phase", message),
            _ => Self::unprocessable("invalid_categories", message),
        }
    }
}

impl From<ResolveError> for ApiError {
    fn from(e: ResolveError) -> Self {
        Self::unprocessable("unknown_category", e.to_string())
    }
}
