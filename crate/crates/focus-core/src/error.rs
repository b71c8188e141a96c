//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, FocusError>;

#[derive(Debug, Error)]
pub enum FocusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {what} at row {row}, column {col}")]
    NonFinite {
        what: String,
        row: usize,
        col: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("independence test failed for source {source_var}, target {target_var}: {inner}")]
    TestFailure {
        source_var: String,
        target_var: String,
        inner: Box<FocusError>,
    },
}
