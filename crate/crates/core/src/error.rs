//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: malformed record: {message}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: invariant violated on `{field}`: {message}")]
    RecordInvariant {
        path: PathBuf,
        line: usize,
        field: String,
        message: String,
    },

    #[error("invariant violated on `{field}`: {message}")]
    Invariant { field: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("provider `{provider}` failed: {message}")]
    Provider { provider: String, message: String },

    #[error("replay cache miss for key {key} (provider `{provider}`)")]
    CacheMiss { provider: String, key: String },

    #[error("dependency error: {0}")]
    Dependency(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("numerical error in `{block}`: {message}")]
    Numerical { block: String, message: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invariant(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invariant {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Error::Validation(message.into())
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 validation, 3 provider/transport, 4 dependency.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MalformedLine { .. }
            | Error::RecordInvariant { .. }
            | Error::Invariant { .. }
            | Error::Validation(_)
            | Error::NotFound(_)
            | Error::Numerical { .. }
            | Error::Json(_) => 2,
            Error::Provider { .. } | Error::CacheMiss { .. } => 3,
            Error::Dependency(_) => 4,
            Error::Io { .. } => 1,
        }
    }
}
