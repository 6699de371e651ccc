use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("non-finite value produced by {op} at element {index}")]
    NonFinite { op: &'static str, index: usize },

    #[error("checkpoint does not match the model: {0}")]
    CheckpointMismatch(String),

    #[error(transparent)]
    Data(#[from] lact_core::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
