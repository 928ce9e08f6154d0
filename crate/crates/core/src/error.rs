use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed config {path}: {message}")]
    Parse { path: PathBuf, message: String },

    /// A value violates a documented constraint. `key` is the dotted config
    /// key (or argument name) that failed.
    #[error("invalid `{key}`: {constraint} (got {value})")]
    Validation {
        key: String,
        constraint: String,
        value: String,
    },

    #[error("invalid sequence: {0}")]
    Sequence(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(
        key: impl Into<String>,
        constraint: impl Into<String>,
        value: impl std::fmt::Display,
    ) -> Self {
        Error::Validation {
            key: key.into(),
            constraint: constraint.into(),
            value: value.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (config values, arguments,
    /// malformed files) rather than runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation { .. } | Error::Parse { .. } | Error::Sequence(_)
        )
    }
}
