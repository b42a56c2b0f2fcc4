use thiserror::Error;

/// Errors surfaced by the simulator, the policy layer and the learner.
#[derive(Debug, Error)]
pub enum Error {
    /// A function was evaluated outside its domain (e.g. `digamma(0)`).
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    /// Malformed, inconsistent or insufficient input data.
    #[error("invalid data: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
