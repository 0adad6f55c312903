//! Uniform error reporting for the HTTP API and the CLI.
//!
//! Every error enum in the crate maps each variant to exactly one HTTP
//! status and a machine-readable code (the variant name).

use serde::Serialize;

use crate::agreement::{AcceptError, AlignError, SessionError, UnresolvedRemaining};
use crate::model::{ParseError, SchemaError, ValidationError};
use crate::recommend::{RecommendError, UnknownLabelError};
use crate::store::{SchemaFileError, StoreError};

/// Status and code for one error value.
pub trait ErrorCode: std::fmt::Display {
    fn status(&self) -> u16;
    fn code(&self) -> &'static str;
    fn path(&self) -> Option<String> {
        None
    }
}

/// The body of every non-2xx API response, and of `--json-errors` output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub message: String,
    pub path: Option<String>,
}

impl ApiError {
    pub fn new(status: u16, code: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.into(),
            message: message.into(),
            path: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(400, "BadRequest", message)
    }

    pub fn with_path(mut self, path: impl Into<String>) -> Self {
        self.path = Some(path.into());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.path {
            Some(p) => write!(f, "{} at {p}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ApiError {}

impl<E: ErrorCode> From<E> for ApiError {
    fn from(e: E) -> Self {
        ApiError {
            status: e.status(),
            code: e.code().to_string(),
            message: e.to_string(),
            path: e.path(),
        }
    }
}

impl ErrorCode for ParseError {
    fn status(&self) -> u16 {
        match self {
            ParseError::MalformedJson(_) => 400,
            ParseError::SchemaViolation { .. } | ParseError::UnknownLabel { .. } => 422,
        }
    }
    fn code(&self) -> &'static str {
        match self {
            ParseError::MalformedJson(_) => "MalformedJson",
            ParseError::SchemaViolation { .. } => "SchemaViolation",
            ParseError::UnknownLabel { .. } => "UnknownLabel",
        }
    }
    fn path(&self) -> Option<String> {
        ParseError::path(self).map(str::to_string)
    }
}

impl ErrorCode for SchemaError {
    fn status(&self) -> u16 {
        500
    }
    fn code(&self) -> &'static str {
        match self {
            SchemaError::Malformed(_) => "Malformed",
            SchemaError::EmptyName => "EmptyName",
            SchemaError::DuplicateLabel(_) => "DuplicateLabel",
            SchemaError::EmptyValues(_) => "EmptyValues",
            SchemaError::DuplicateValue { .. } => "DuplicateValue",
            SchemaError::CardinalityOnSlotLabel(_) => "CardinalityOnSlotLabel",
            SchemaError::MissingCardinality(_) => "MissingCardinality",
            SchemaError::UnknownRecommenderType { .. } => "UnknownRecommenderType",
            SchemaError::InvalidRecommender { .. } => "InvalidRecommender",
        }
    }
}

impl ErrorCode for SchemaFileError {
    fn status(&self) -> u16 {
        match self {
            SchemaFileError::Io { .. } => 500,
            SchemaFileError::Schema(e) => e.status(),
        }
    }
    fn code(&self) -> &'static str {
        match self {
            SchemaFileError::Io { .. } => "Io",
            SchemaFileError::Schema(e) => e.code(),
        }
    }
    fn path(&self) -> Option<String> {
        match self {
            SchemaFileError::Io { path, .. } => Some(path.display().to_string()),
            SchemaFileError::Schema(_) => None,
        }
    }
}

impl ErrorCode for ValidationError {
    fn status(&self) -> u16 {
        422
    }
    fn code(&self) -> &'static str {
        match self {
            ValidationError::KindMismatch { .. } => "KindMismatch",
            ValidationError::UnknownClass { .. } => "UnknownClass",
            ValidationError::CardinalityViolation { .. } => "CardinalityViolation",
            ValidationError::UnknownSlot { .. } => "UnknownSlot",
            ValidationError::EmptySlotValue { .. } => "EmptySlotValue",
        }
    }
}

impl ErrorCode for RecommendError {
    fn status(&self) -> u16 {
        match self {
            RecommendError::EmptyQuery => 422,
            RecommendError::ExternalTimeout { .. } => 504,
            RecommendError::ExternalUnavailable { .. }
            | RecommendError::ExternalProtocolError { .. }
            | RecommendError::InvalidPrediction { .. } => 502,
        }
    }
    fn code(&self) -> &'static str {
        match self {
            RecommendError::EmptyQuery => "EmptyQuery",
            RecommendError::ExternalTimeout { .. } => "ExternalTimeout",
            RecommendError::ExternalUnavailable { .. } => "ExternalUnavailable",
            RecommendError::ExternalProtocolError { .. } => "ExternalProtocolError",
            RecommendError::InvalidPrediction { .. } => "InvalidPrediction",
        }
    }
}

impl ErrorCode for UnknownLabelError {
    fn status(&self) -> u16 {
        422
    }
    fn code(&self) -> &'static str {
        "UnknownLabel"
    }
}

impl ErrorCode for AlignError {
    fn status(&self) -> u16 {
        422
    }
    fn code(&self) -> &'static str {
        match self {
            AlignError::TooFewAnnotators { .. } => "TooFewAnnotators",
            AlignError::TurnCountMismatch { .. } => "TurnCountMismatch",
            AlignError::UtteranceTextMismatch { .. } => "UtteranceTextMismatch",
            AlignError::DuplicateAnnotator { .. } => "DuplicateAnnotator",
        }
    }
}

impl ErrorCode for AcceptError {
    fn status(&self) -> u16 {
        match self {
            AcceptError::AlreadyAccepted { .. } => 409,
            AcceptError::InvalidValue(e) => e.status(),
        }
    }
    fn code(&self) -> &'static str {
        match self {
            AcceptError::AlreadyAccepted { .. } => "AlreadyAccepted",
            AcceptError::InvalidValue(e) => e.code(),
        }
    }
}

impl ErrorCode for UnresolvedRemaining {
    fn status(&self) -> u16 {
        409
    }
    fn code(&self) -> &'static str {
        "UnresolvedRemaining"
    }
}

impl ErrorCode for SessionError {
    fn status(&self) -> u16 {
        match self {
            SessionError::Align(e) => e.status(),
            SessionError::Accept(e) => e.status(),
            SessionError::Unresolved(e) => e.status(),
            SessionError::UnknownDisagreement { .. } => 404,
            SessionError::Corrupt(_) => 500,
            SessionError::Parse(e) => e.status(),
        }
    }
    fn code(&self) -> &'static str {
        match self {
            SessionError::Align(e) => e.code(),
            SessionError::Accept(e) => e.code(),
            SessionError::Unresolved(e) => e.code(),
            SessionError::UnknownDisagreement { .. } => "UnknownDisagreement",
            SessionError::Corrupt(_) => "CorruptSession",
            SessionError::Parse(e) => e.code(),
        }
    }
    fn path(&self) -> Option<String> {
        match self {
            SessionError::Parse(e) => ErrorCode::path(e),
            _ => None,
        }
    }
}

impl ErrorCode for StoreError {
    fn status(&self) -> u16 {
        match self {
            StoreError::Io { .. } | StoreError::CorruptFile { .. } | StoreError::SchemaMissing => {
                500
            }
            StoreError::InvalidName(_) => 422,
            StoreError::UnknownDataset(_)
            | StoreError::UnknownDialogue(_)
            | StoreError::UnknownTurn { .. }
            | StoreError::UnknownSession(_) => 404,
            StoreError::DatasetExists(_) => 409,
            StoreError::Validation(e) => e.status(),
            StoreError::Session(e) => e.status(),
        }
    }
    fn code(&self) -> &'static str {
        match self {
            StoreError::Io { .. } => "Io",
            StoreError::CorruptFile { .. } => "CorruptFile",
            StoreError::SchemaMissing => "SchemaMissing",
            StoreError::InvalidName(_) => "InvalidName",
            StoreError::UnknownDataset(_) => "UnknownDataset",
            StoreError::UnknownDialogue(_) => "UnknownDialogue",
            StoreError::UnknownTurn { .. } => "UnknownTurn",
            StoreError::UnknownSession(_) => "UnknownSession",
            StoreError::DatasetExists(_) => "DatasetExists",
            StoreError::Validation(e) => e.code(),
            StoreError::Session(e) => e.code(),
        }
    }
    fn path(&self) -> Option<String> {
        match self {
            StoreError::Io { path, .. } | StoreError::CorruptFile { path, .. } => {
                Some(path.display().to_string())
            }
            StoreError::Validation(e) => ErrorCode::path(e),
            StoreError::Session(e) => e.path(),
            _ => None,
        }
    }
}
