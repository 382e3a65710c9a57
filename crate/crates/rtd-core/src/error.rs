use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the RTD pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A state or parameter became non-finite during numerical work.
    #[error("non-finite value in {context}: {detail}")]
    NonFinite { context: &'static str, detail: String },

    /// Configuration file problems (missing keys, bad values).
    #[error("config error: {0}")]
    Config(String),

    /// An offline audit failed (containment, coverage, braking).
    #[error("audit failure: {0}")]
    Audit(String),

    /// The iterative fit could not meet its acceptance threshold.
    #[error("fit rejected: {0}")]
    FitRejected(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
