use thiserror::Error;

/// Errors produced by the toolkit's library operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("point outside grid extent (col {col}, row {row})")]
    OutOfBounds { col: i64, row: i64 },

    #[error("size error: {0}")]
    Size(String),

    #[error("conditioning error: {0}")]
    Conditioning(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("metric undefined: {0}")]
    Undefined(String),

    #[error("format error at line {line}: {message}")]
    Format { line: u64, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
