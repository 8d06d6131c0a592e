use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("mask selects no entries")]
    EmptyMask,

    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),

    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("index {index} out of bounds for length {len}")]
    IndexOutOfBounds { index: usize, len: usize },

    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),

    #[error("depth {depth} outside 2..={classes}")]
    DepthOutOfRange { depth: usize, classes: usize },

    #[error("teacher and student logits differ in length ({teacher} vs {student})")]
    LengthMismatch { teacher: usize, student: usize },

    #[error("ranks must be >= 1 and distinct, got ({0}, {1})")]
    InvalidRankPair(usize, usize),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("divergence is infinite: student assigns zero mass where teacher does not")]
    InfiniteDivergence,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
