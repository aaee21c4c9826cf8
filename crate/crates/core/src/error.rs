use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid Pauli string {0:?}")]
    InvalidPauli(String),
    #[error("invalid observable: {0}")]
    InvalidObservable(String),
    #[error("state is not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("readout correction is singular for p = {0}")]
    SingularCorrection(f64),
    #[error("degenerate time-step pair ({0}, {1})")]
    DegeneratePair(f64, f64),
    #[error("no feasible time-step pair in the search domain")]
    NoFeasiblePair,
    #[error("bias bound {bias:e} already exceeds target {target:e}; reduce tau")]
    BiasExceedsTarget { bias: f64, target: f64 },
    #[error("target unreachable within {0} shots")]
    Unreachable(u64),
}

pub type Result<T> = std::result::Result<T, Error>;
