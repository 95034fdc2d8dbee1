use thiserror::Error;

/// Errors raised by the library. Each variant is one error category; the CLI
/// maps them onto exit codes and message prefixes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid transform: {0}")]
    InvalidTransform(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("series too short: {0}")]
    TooShort(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("sigma ordering violated: {0}")]
    Ordering(String),
    #[error("guidance gating: {0}")]
    Gating(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("unsupported format version {found} (newest supported is {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short category tag, stable across releases.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidTransform(_) => "invalid-transform",
            Error::Validation(_) => "validation",
            Error::TooShort(_) => "too-short",
            Error::Config(_) => "config",
            Error::Ordering(_) => "ordering",
            Error::Gating(_) => "gating",
            Error::InsufficientData(_) => "insufficient-data",
            Error::Parse { .. } => "parse",
            Error::Format(_) => "format",
            Error::UnsupportedVersion { .. } => "unsupported-version",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
