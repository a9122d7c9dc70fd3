use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use flowspace_core::design_space::DesignError;
use flowspace_core::executor::CompileError;
use flowspace_core::generator::GenerationError;
use flowspace_core::ir::{ValidationReport, Violation};
use flowspace_core::persistence::{ExportError, PersistError};
use serde::Serialize;

/// Error body returned by every endpoint: `{status, code, message}`, plus the
/// individual violation messages for validation failures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiError {
    #[serde(serialize_with = "status_code")]
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
}

fn status_code<S: serde::Serializer>(status: &StatusCode, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u16(status.as_u16())
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.to_string(),
            message: message.into(),
            violations: Vec::new(),
        }
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} {id}"))
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    fn validation(report: &ValidationReport) -> Self {
        Self {
            violations: report.messages(),
            ..Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation_failed", report.to_string())
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        crate::routes::canonical_response(self.status, &self)
    }
}

impl From<DesignError> for ApiError {
    fn from(e: DesignError) -> Self {
        let e = match e {
            DesignError::Generation(g) => return g.into(),
            other => other,
        };
        let unprocessable = |code: &str| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, e.to_string());
        match &e {
            DesignError::UnknownNode(id) => ApiError::not_found("node", id),
            DesignError::UnknownRun(id) => ApiError::not_found("run", id),
            DesignError::AlreadyConcrete(_) => unprocessable("already_concrete"),
            DesignError::NotExecutable(_) => unprocessable("not_executable"),
            DesignError::InvalidArtifact(report) => ApiError::validation(report),
            DesignError::UnknownDimension(_) => unprocessable("unknown_dimension"),
            DesignError::ReservedDimension(_) => unprocessable("reserved_dimension"),
            DesignError::DimensionKind { .. } => unprocessable("dimension_kind"),
            DesignError::EditLevel { .. } => unprocessable("edit_level"),
            DesignError::RunMismatch { .. } => unprocessable("run_mismatch"),
            DesignError::HasChildren(_) => ApiError::new(StatusCode::CONFLICT, "has_children", e.to_string()),
            DesignError::Integrity(_) => ApiError::internal(e.to_string()),
            DesignError::Generation(_) => unreachable!("handled above"),
        }
    }
}

impl From<GenerationError> for ApiError {
    fn from(e: GenerationError) -> Self {
        match &e {
            GenerationError::InvalidRequest(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", e.to_string()),
            GenerationError::Client(_) => ApiError::new(StatusCode::BAD_GATEWAY, "upstream_failure", e.to_string()),
            _ => ApiError::new(StatusCode::BAD_GATEWAY, "upstream_unparseable", e.to_string()),
        }
    }
}

impl From<ExportError> for ApiError {
    fn from(e: ExportError) -> Self {
        match e {
            ExportError::Design(d) => d.into(),
            ExportError::UnknownFormat(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unknown_format", e.to_string()),
            ExportError::Compile(c) => c.into(),
            ExportError::Import(_) => ApiError::bad_request(e.to_string()),
        }
    }
}

impl From<CompileError> for ApiError {
    fn from(e: CompileError) -> Self {
        match &e {
            CompileError::Invalid(report) => ApiError::validation(report),
            CompileError::Pattern(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation_failed", e.to_string()),
        }
    }
}

impl From<PersistError> for ApiError {
    fn from(e: PersistError) -> Self {
        ApiError::internal(e.to_string())
    }
}

impl From<Violation> for ApiError {
    fn from(v: Violation) -> Self {
        ApiError::validation(&ValidationReport { violations: vec![v] })
    }
}
