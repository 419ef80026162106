use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the workflow can report. Each variant maps to exactly one
/// stable machine code (see [`Error::code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed on `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("participant id space exhausted")]
    IdExhausted,

    #[error("participant {0} has no visit numbers left")]
    VisitSequenceExhausted(String),

    #[error("unknown participant {0}")]
    UnknownParticipant(String),

    #[error("unknown visit {0}")]
    UnknownVisit(String),

    #[error("unknown {kind} {id}")]
    UnknownEntity { kind: &'static str, id: String },

    #[error("illegal visit transition {from} -> {to}")]
    IllegalTransition { from: String, to: String },

    #[error("illegal state: {0}")]
    IllegalState(String),

    #[error("conflicting concurrent edit of {entity}: expected version {expected}, found {found}")]
    Conflict { entity: String, expected: u64, found: u64 },

    #[error("authentication required")]
    Unauthenticated,

    #[error("not authorized: {0}")]
    Unauthorized(String),

    #[error("no active letter dispatch for visit {0}")]
    NoActiveDispatch(String),

    #[error("missing letter template {0}")]
    MissingTemplate(String),

    #[error("unsupported locale `{0}`")]
    UnsupportedLocale(String),

    #[error("questionnaire schema error: {0}")]
    Schema(String),

    #[error("format error at row {row}, column `{column}`: {message}")]
    Format {
        row: usize,
        column: String,
        message: String,
    },

    #[error("object `{0}` not found")]
    NotFound(String),

    #[error("storage backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("storage key `{0}` violates the key policy")]
    KeyPolicyViolation(String),

    #[error("infeasible synthesis targets: {0}")]
    InfeasibleTargets(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("division by zero")]
    DivisionByZero,

    #[error("response for visit {0} has no matching participant")]
    JoinFailure(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn format(row: usize, column: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            row,
            column: column.into(),
            message: message.into(),
        }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Validation { .. } => "validation_error",
            Error::IdExhausted => "id_exhausted",
            Error::VisitSequenceExhausted(_) => "visit_sequence_exhausted",
            Error::UnknownParticipant(_) => "unknown_participant",
            Error::UnknownVisit(_) => "unknown_visit",
            Error::UnknownEntity { .. } => "unknown_entity",
            Error::IllegalTransition { .. } => "illegal_transition",
            Error::IllegalState(_) => "illegal_state",
            Error::Conflict { .. } => "conflict",
            Error::Unauthenticated => "unauthenticated",
            Error::Unauthorized(_) => "unauthorized",
            Error::NoActiveDispatch(_) => "no_active_dispatch",
            Error::MissingTemplate(_) => "missing_template",
            Error::UnsupportedLocale(_) => "unsupported_locale",
            Error::Schema(_) => "schema_error",
            Error::Format { .. } => "format_error",
            Error::NotFound(_) => "not_found",
            Error::BackendUnavailable(_) => "backend_unavailable",
            Error::KeyPolicyViolation(_) => "key_policy_violation",
            Error::InfeasibleTargets(_) => "infeasible_targets",
            Error::EmptyInput(_) => "empty_input",
            Error::DivisionByZero => "division_by_zero",
            Error::JoinFailure(_) => "join_failure",
            Error::Config(_) => "config_error",
            Error::Io(_) => "io_error",
            Error::Internal(_) => "internal_error",
        }
    }

    /// Field or cell the error points at, when there is one.
    pub fn locator(&self) -> Option<String> {
        match self {
            Error::Validation { field, .. } => Some(field.clone()),
            Error::Format { row, column, .. } => Some(format!("row {row}, column {column}")),
            _ => None,
        }
    }
}
