use std::path::PathBuf;

/// Errors produced across the suite.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite values in {0}; aborting update")]
    NonFinite(String),

    #[error("replay buffer not ready: {0}")]
    NotReady(String),

    #[error("unknown environment `{0}`")]
    UnknownEnv(String),

    #[error("unknown algorithm `{0}`")]
    UnknownAlgo(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
