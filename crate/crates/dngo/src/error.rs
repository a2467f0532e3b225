use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("coordinate {index} = {value} outside [{lower}, {upper}]")]
    OutOfBounds {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("no valid observations")]
    NoValidObservations,

    #[error("matrix factorization failed: {0}")]
    Factorization(String),

    #[error("slice sampler exceeded {0} step-out iterations (pathological density)")]
    SliceStepOut(usize),

    #[error("constraint MAP fit did not converge after {0} iterations")]
    IrlsNonConvergence(usize),

    #[error("unknown problem '{0}'")]
    UnknownProblem(String),
}
