use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("step index {index} out of range 0..={max}")]
    StepOutOfRange { index: usize, max: usize },

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("unknown condition key `{0}`")]
    UnknownKey(String),

    #[error("duplicate condition key `{0}`")]
    DuplicateKey(String),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("key `{0}` has no sampleable distribution")]
    NotSampleable(String),

    #[error("invalid solver configuration: {0}")]
    InvalidSolver(String),

    #[error("private and public key are both `{0}`; enable diagnostic mode to allow this")]
    SameKeys(String),

    #[error("invalid degradation: {0}")]
    InvalidDegradation(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("batch of {found} is too small, need at least {min}")]
    BatchTooSmall { found: usize, min: usize },

    #[error("{0}")]
    InvalidArgument(String),
}
