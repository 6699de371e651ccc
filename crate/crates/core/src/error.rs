use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error(
        "fan does not cover the field of view: half-fan {half_fan_deg:.4}° < required {required_deg:.4}°"
    )]
    FanCoverage { half_fan_deg: f64, required_deg: f64 },

    #[error("size mismatch: {what} (expected {expected}, found {found})")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid angular window [{alpha}°, {beta}°]: {reason}")]
    InvalidWindow { alpha: f64, beta: f64, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported {format} version {found} (expected {expected})")]
    UnsupportedVersion {
        format: &'static str,
        expected: u32,
        found: u32,
    },

    #[error("truncated {format} data: need {needed} bytes, have {available}")]
    Truncated {
        format: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("malformed {format} data: {reason}")]
    Malformed { format: &'static str, reason: String },

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("PNG encoding failed: {0}")]
    Png(#[from] png::EncodingError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed or mismatched data (as opposed to
    /// I/O failures or invalid arguments).
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::BadMagic { .. }
                | Error::UnsupportedVersion { .. }
                | Error::Truncated { .. }
                | Error::Malformed { .. }
                | Error::GeometryMismatch(_)
                | Error::SizeMismatch { .. }
                | Error::Json(_)
                | Error::Io { .. }
        )
    }
}
