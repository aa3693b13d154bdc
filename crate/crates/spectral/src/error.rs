use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, SpectralError>;

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// Malformed file contents (bad magic, truncated payload, ...).
    #[error("format error: {0}")]
    Format(String),

    /// File contents disagree with the manifest or with expected shapes.
    #[error("schema error: {0}")]
    Schema(String),

    /// Array dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// An operation received an empty input it cannot handle.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Invalid configuration value or combination.
    #[error("config error: {0}")]
    Config(String),

    #[error("missing file: {0}")]
    MissingFile(PathBuf),
}
