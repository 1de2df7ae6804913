use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition (dimension mismatch, index out of range).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Input data is well-formed but outside the allowed domain.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("joint mapping error: {0}")]
    Mapping(String),

    #[error("clip generation error: {0}")]
    Generation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric fault in {context}")]
    NumericFault { context: String },

    #[error("invalid state: {0}")]
    State(String),

    #[error("signal layout version mismatch: checkpoint has {found}, runtime expects {expected}")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn numeric(context: impl Into<String>) -> Self {
        Error::NumericFault {
            context: context.into(),
        }
    }

    /// Prefixes the context of a numeric fault, leaving other variants untouched.
    pub fn within(self, outer: impl std::fmt::Display) -> Self {
        match self {
            Error::NumericFault { context } => Error::NumericFault {
                context: format!("{outer}: {context}"),
            },
            other => other,
        }
    }
}
