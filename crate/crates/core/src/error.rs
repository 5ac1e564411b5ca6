use std::io;

use thiserror::Error;

use crate::osc::OscError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value outside the domain of a type or operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Osc(#[from] OscError),

    #[error("dataset line {line}: {message}")]
    Dataset { line: usize, message: String },

    #[error("model file: {0}")]
    Model(String),

    #[error("unsupported model format version {found} (this build reads {supported})")]
    ModelVersion { found: u32, supported: u32 },

    #[error("feature schema mismatch: model expects {expected}, got {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
