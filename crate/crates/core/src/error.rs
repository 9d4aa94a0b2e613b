use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("voxel edge must be positive, got {0}")]
    NonPositiveVoxel(f64),
    #[error("cloud collection is empty")]
    EmptyCollection,
    #[error("no valid cloud pairs once identical clouds are excluded")]
    NoValidPairs,
    #[error("collections carry different gesture labels ({0} vs {1})")]
    LabelMismatch(usize, usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("threshold history is empty")]
    EmptyHistory,
    #[error("stream has {frames} frames, at least {needed} required")]
    StreamTooShort { frames: usize, needed: usize },
    #[error("segment [{start}, {end}] lies outside the stream")]
    SegmentOutOfRange { start: u64, end: u64 },

    #[error("no density cluster with at least {n_min} points")]
    NoCluster { n_min: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite activation in {0}")]
    NonFiniteActivation(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("trace does not match the parameters: {0}")]
    TraceMismatch(String),

    #[error("class {class} has {count} samples, {needed} required")]
    ClassTooSmall { class: usize, count: usize, needed: usize },
    #[error("dataset is empty or has fewer than two classes")]
    EmptyDataset,
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    DivergenceDetected { epoch: usize, loss: f64 },

    #[error("no samples for gesture {gesture} and user {user}")]
    EmptyCell { gesture: usize, user: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("no class has both positive and negative samples; AUC undefined")]
    DegenerateClass,
    #[error("list is empty")]
    EmptyList,
    #[error("score pool is empty")]
    EmptyPool,

    #[error("bad schedule: {0}")]
    BadSchedule(String),
    #[error("segmentation disagrees with ground truth: {0}")]
    OracleMismatch(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("frame indices not strictly increasing at line {line}")]
    NonMonotoneFrames { line: usize },
    #[error("unsupported model file version {found:?}, expected {expected:?}")]
    VersionMismatch { found: String, expected: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
