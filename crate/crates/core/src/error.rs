//! Error type shared by every module.
//!
//! Two families matter to callers. `Input` means the request itself is malformed
//! (bad field, value out of range) and carries a JSON pointer to the offending
//! field. `Domain` means the request is well-formed but the math has no usable
//! answer there; it carries a stable machine-readable [`ErrorCode`].

use serde::{Deserialize, Serialize};
use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

/// Stable codes attached to domain errors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    DegeneratePassRate,
    FlatFrontier,
    AmbiguousEquilibrium,
    InsufficientClassSamples,
    UnstableNormalization,
    InvalidInput,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::DegeneratePassRate => "degenerate_pass_rate",
            ErrorCode::FlatFrontier => "flat_frontier",
            ErrorCode::AmbiguousEquilibrium => "ambiguous_equilibrium",
            ErrorCode::InsufficientClassSamples => "insufficient_class_samples",
            ErrorCode::UnstableNormalization => "unstable_normalization",
            ErrorCode::InvalidInput => "invalid_input",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Schema or range violation in the request. `pointer` is a JSON pointer.
    #[error("invalid input at {pointer}: {message}")]
    Input { pointer: String, message: String },
    /// Well-formed request with no usable answer.
    #[error("{code}: {message}")]
    Domain {
        code: ErrorCode,
        message: String,
        detail: Option<serde_json::Value>,
    },
    /// Operation not available for this model variant.
    #[error("not implemented: {0}")]
    NotImplemented(String),
}

impl Error {
    pub fn input(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Input {
            pointer: pointer.into(),
            message: message.into(),
        }
    }

    pub fn domain(code: ErrorCode, message: impl Into<String>) -> Self {
        Error::Domain {
            code,
            message: message.into(),
            detail: None,
        }
    }

    pub fn domain_with(code: ErrorCode, message: impl Into<String>, detail: serde_json::Value) -> Self {
        Error::Domain {
            code,
            message: message.into(),
            detail: Some(detail),
        }
    }

    /// Code reported for this error; input and not-implemented errors map to `invalid_input`.
    pub fn code(&self) -> ErrorCode {
        match self {
            Error::Domain { code, .. } => *code,
            _ => ErrorCode::InvalidInput,
        }
    }

    pub fn is_input(&self) -> bool {
        matches!(self, Error::Input { .. })
    }
}
