//! Error type shared across the library and the CLI.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
///
/// The CLI maps these onto process exit codes: data/usage problems exit
/// with 1, training failures with 2 (see [`Error::exit_code`]).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv parse error: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row} has {got} columns, expected {expected}")]
    RaggedRow { row: usize, expected: usize, got: usize },

    #[error("row {row}, column {column}: cannot parse {value:?} as a number")]
    BadCell { row: usize, column: usize, value: String },

    #[error("{0}")]
    EmptyInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("class {name:?} has a single instance; stratified splitting needs at least two")]
    SingleInstanceClass { name: String },

    #[error("matrix is not symmetric positive semi-definite: {0}")]
    NotPsd(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model file {path}: {message}")]
    Model { path: PathBuf, message: String },

    #[error("training failed: {0}")]
    Training(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code the CLI should use for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Training(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
