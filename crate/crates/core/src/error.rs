use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("mesh parse error at line {line}: {msg}")]
    MeshParse { line: usize, msg: String },

    #[error("mesh has no triangles")]
    EmptyMesh,

    #[error("unknown object {0:?}")]
    UnknownObject(String),

    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),

    #[error("viewsphere radius mismatch: {0} vs {1}")]
    RadiusMismatch(f64, f64),

    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),

    #[error("plane segmentation failed: {0}")]
    Segmentation(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("policy {policy} refused object {object}: it was used for training")]
    TrainingObject { policy: String, object: String },

    #[error("harness invariant violated: {0}")]
    Harness(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
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
