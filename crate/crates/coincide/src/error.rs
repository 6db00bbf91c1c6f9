//! Errors of the configuration, file and reporting layer.

use std::path::PathBuf;

pub type IoResult<T> = Result<T, IoError>;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("field file {path} does not match the expected layout: {reason}")]
    SchemaMismatch { path: PathBuf, reason: String },
    #[error(transparent)]
    Core(#[from] coincide_core::Error),
}

impl IoError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub(crate) fn schema(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Self::SchemaMismatch { path: path.into(), reason: reason.into() }
    }
}
