use std::path::PathBuf;

use crate::domain::BoundingBox;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure reported by a model boundary (detector, encoder, classifier).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct BoundaryError(pub String);

impl BoundaryError {
    pub fn new(msg: impl Into<String>) -> Self {
        BoundaryError(msg.into())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid bounding box {0:?}")]
    InvalidBox(BoundingBox),
    #[error("unknown content class {0:?}")]
    UnknownClass(String),
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("exemplar index has no entries")]
    EmptyIndex,
    #[error("embedding for {label:?} has dimension {got}, expected {expected}")]
    DimensionMismatch { label: String, expected: usize, got: usize },
    #[error("cannot normalize zero or non-finite embedding for {label:?}")]
    CannotNormalize { label: String },
    #[error("malformed {what}: {msg}")]
    Format { what: &'static str, msg: String },

    #[error("need at least {needed} modern words, got {got}")]
    NotEnoughModernWords { needed: usize, got: usize },
    #[error("max edit distance must be 1 or 2, got {0}")]
    MaxEdit(usize),

    #[error("probability of the true class is zero; loss is infinite")]
    InfiniteLoss,
    #[error("invalid probability triple {0:?}")]
    InvalidProbabilities([f64; 3]),
    #[error("length mismatch: {left} predictions vs {right} labels")]
    LengthMismatch { left: usize, right: usize },
    #[error("region {0} is not a text region")]
    NonTextRegion(String),

    #[error("class {0:?} has no positive in the batch")]
    SingletonClass(String),
    #[error("invalid batch: {0}")]
    Batch(String),
    #[error("need at least {needed} reference labels, got {got}")]
    TooFewLabels { needed: usize, got: usize },
    #[error("class {0:?} has no synthetic views")]
    NoSyntheticViews(String),

    #[error("total ground-truth length is zero")]
    EmptyGroundTruth,
    #[error("corpora differ: ground-truth lengths {left} vs {right}")]
    CorpusMismatch { left: usize, right: usize },
    #[error("prediction references scan {0:?} absent from ground truth")]
    UnknownScan(String),

    #[error(transparent)]
    Boundary(#[from] BoundaryError),
    #[error("{}: {cause}", path.display())]
    Io { path: PathBuf, cause: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), cause: source }
    }
}
