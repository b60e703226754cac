use alloc::string::String;

/// Errors raised by the algorithmic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid skeleton: {0}")]
    Skeleton(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid window: {0}")]
    Window(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("rate mismatch: expected {expected} Hz, found {found} Hz")]
    RateMismatch { expected: f64, found: f64 },
    #[error("sequence of {len} frames exceeds context limit {limit}")]
    ContextOverflow { len: usize, limit: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("missing parameter `{0}`")]
    MissingParameter(String),
    #[error("noise step {step} outside 1..={max}")]
    StepOutOfRange { step: usize, max: usize },
}

pub type Result<T> = core::result::Result<T, Error>;
