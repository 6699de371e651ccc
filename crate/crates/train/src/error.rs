use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] lact_core::Error),

    #[error(transparent)]
    Nn(#[from] lact_nn::Error),

    #[error("invalid training config: {0}")]
    Config(String),

    #[error("input does not fit the model: {0}")]
    Input(String),

    #[error("non-finite loss {loss} at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: u64, loss: f64 },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// NaN or infinity produced during computation.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFiniteLoss { .. } | Error::Nn(lact_nn::Error::NonFinite { .. }))
    }

    /// Malformed, mismatched or unreadable input data.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Core(e) => e.is_data_error(),
            Error::Nn(lact_nn::Error::Data(e)) => e.is_data_error(),
            Error::Nn(lact_nn::Error::CheckpointMismatch(_) | lact_nn::Error::Json(_)) => true,
            Error::Input(_) | Error::Csv(_) | Error::Json(_) | Error::Io { .. } => true,
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
