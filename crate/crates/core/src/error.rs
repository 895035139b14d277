use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{0} is not positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("matrix is rank deficient (condition number {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("noise variance must be positive for the normalized loss")]
    ZeroNoiseVariance,

    #[error("grid has {points} points but {required} are required")]
    GridTooSmall { points: usize, required: usize },

    #[error("requested grid of {points} points exceeds the limit of {limit}")]
    OversizeGrid { points: usize, limit: usize },

    #[error("scan step {step:.3e} rad is too coarse for oscillation period {period:.3e} rad")]
    ScanTooCoarse { step: f64, period: f64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
