use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Each variant maps onto one CLI exit code via [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    Dimensions {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("singular or ill-conditioned transform (condition number {condition:.3e})")]
    Singular { condition: f64 },
    #[error("value {value} at index {index} is outside [0, 1]; pass clip to saturate")]
    OutOfRange { value: f64, index: usize },
    #[error("unknown {kind} '{name}'")]
    Lookup { kind: &'static str, name: String },
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("unsupported image format in {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingFile(_) | Error::UnsupportedFormat { .. } | Error::Io { .. } => 3,
            Error::Internal(_) => 1,
            _ => 2,
        }
    }
}
