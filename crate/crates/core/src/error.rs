use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or config value is outside its admissible range.
    #[error("configuration error: {0}")]
    Config(String),

    /// A call violated an operation's precondition (index out of range, empty input, ...).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("sequencing error: expected round {expected}, got {got}")]
    Sequencing { expected: u64, got: u64 },

    /// Two summaries with the same (origin, stamp) disagree on content.
    #[error("integrity error: conflicting summaries for origin {origin} at stamp {stamp}")]
    Integrity { origin: usize, stamp: u64 },

    #[error("unsupported model: {0}")]
    Unsupported(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
}

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn usage_err(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}
