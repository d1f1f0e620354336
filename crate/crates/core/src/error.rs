use std::path::PathBuf;

use crate::geometry::GridDims;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("grid dimensions must be at least 1x1, got {width}x{height}")]
    EmptyGrid { width: usize, height: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimsMismatch { expected: GridDims, found: GridDims },

    #[error("grid holds {found} values but {expected} were expected")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-finite value {value} at ({x}, {y})")]
    NonFinite { x: usize, y: usize, value: f32 },

    #[error("invalid scene: {0}")]
    Validation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("batch is empty")]
    EmptyBatch,

    #[error("no track segment within {tau_start:.1} px of the bottom centre")]
    NoStartPath { tau_start: f64 },

    #[error("scene generation infeasible: {0}")]
    GenerationInfeasible(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("png encoding: {0}")]
    Png(#[from] png::EncodingError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
