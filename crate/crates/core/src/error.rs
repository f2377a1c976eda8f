use std::io;

use thiserror::Error;

/// Errors raised anywhere in the classification pipeline.
#[derive(Debug, Error)]
pub enum AcdcError {
    /// Invalid configuration: bad generator spec, split fraction, pool sizes, scenario.
    #[error("config error: {0}")]
    Config(String),

    /// A file does not follow the expected container format (e.g. pcap global header).
    #[error("format error: {0}")]
    Format(String),

    /// Malformed content at a known byte offset.
    #[error("parse error at byte offset {offset}: {message}")]
    Parse { offset: u64, message: String },

    /// A header is too short to hold a fixed field.
    #[error("encode error in field {field}: {message}")]
    Encode { field: String, message: String },

    #[error("shape error: expected vector length {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("training error: {0}")]
    Training(String),

    /// Invalid call argument (unknown field, empty input, out-of-range value).
    #[error("argument error: {0}")]
    Argument(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl AcdcError {
    /// True for errors caused by user-supplied configuration rather than runtime failures.
    pub fn is_config(&self) -> bool {
        matches!(self, AcdcError::Config(_) | AcdcError::Argument(_))
    }
}

pub type Result<T, E = AcdcError> = std::result::Result<T, E>;
