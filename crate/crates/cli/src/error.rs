use discovery_core::{Error as CoreError, ErrorCode};
use serde::Serialize;

/// Everything a command can fail with, mapped onto exit codes and HTTP statuses.
#[derive(Debug)]
pub enum CliError {
    /// JSON that does not match the schema. Line and column are 1-based.
    Parse {
        pointer: String,
        line: usize,
        column: usize,
        message: String,
    },
    Core(CoreError),
    Io(String),
    Internal(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Serialize)]
struct Body<'a> {
    error: Detail<'a>,
}

#[derive(Serialize)]
struct Detail<'a> {
    kind: &'a str,
    code: ErrorCode,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pointer: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    column: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<&'a serde_json::Value>,
}

impl CliError {
    pub fn input(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Core(CoreError::input(pointer, message))
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Parse { .. } => "input",
            CliError::Core(CoreError::Input { .. }) => "input",
            CliError::Core(_) => "domain",
            CliError::Io(_) => "io",
            CliError::Internal(_) => "internal",
        }
    }

    /// 0 success, 2 input, 3 domain, 4 internal.
    pub fn exit_code(&self) -> u8 {
        match self.kind() {
            "input" | "io" => 2,
            "domain" => 3,
            _ => 4,
        }
    }

    pub fn http_status(&self) -> u16 {
        match self.kind() {
            "input" | "io" => 400,
            "domain" => 422,
            _ => 500,
        }
    }

    pub fn to_json(&self) -> String {
        let (pointer, line, column, detail) = match self {
            CliError::Parse { pointer, line, column, .. } => (Some(pointer.as_str()), Some(*line), Some(*column), None),
            CliError::Core(CoreError::Input { pointer, .. }) => (Some(pointer.as_str()), None, None, None),
            CliError::Core(CoreError::Domain { detail, .. }) => (None, None, None, detail.as_ref()),
            _ => (None, None, None, None),
        };
        let code = match self {
            CliError::Core(e) => e.code(),
            _ => ErrorCode::InvalidInput,
        };
        let body = Body {
            error: Detail {
                kind: self.kind(),
                code,
                message: self.to_string(),
                pointer,
                line,
                column,
                detail,
            },
        };
        crate::output::render_json(&body)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Parse { pointer, line, column, message } => {
                write!(f, "line {line}, column {column} ({pointer}): {message}")
            }
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}
