use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid distribution parameters: {0}")]
    InvalidLaw(String),

    #[error("target is not absolutely continuous w.r.t. the prior in dimension {dim}")]
    NotAbsolutelyContinuous { dim: usize },

    #[error("point lies outside the prior support in dimension {dim}")]
    OutsideSupport { dim: usize },

    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),

    #[error("density ratio is unbounded; exact sampling would not terminate")]
    InfiniteRatio,

    #[error("bin index {bin} out of range for partition with {total} bins")]
    BinOutOfRange { bin: u64, total: u64 },

    #[error("local sample index must be >= 1")]
    ZeroLocalIndex,

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("arrival process exhausted after {0} arrivals")]
    ArrivalsExhausted(u64),

    #[error("index {0} outside codable range [1, 2^32]")]
    IndexOutOfRange(u64),

    #[error("empty input")]
    EmptyInput,

    #[error("non-positive logarithm argument {0} in codelength bound")]
    NonPositiveLogArgument(f64),

    #[error("malformed block: {0}")]
    MalformedBlock(String),

    #[error("json: {0}")]
    Json(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}
