use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("local dimension must be at least 2, got {0}")]
    LocalDimension(usize),
    #[error("space of {l}^{n} amplitudes does not fit in memory indices")]
    DimensionOverflow { l: usize, n: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("vector is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("not orthonormal: max deviation {0:e}")]
    NotOrthonormal(f64),
    #[error("all generators are zero")]
    AllZeroGenerators,
    #[error("invalid tolerance {0}")]
    InvalidTolerance(f64),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid inserted state: {0}")]
    InvalidInsertedState(String),
    #[error("invalid Kraus set: {0}")]
    InvalidKrausSet(String),
    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),
    #[error("invalid code: {0}")]
    InvalidCode(String),
    #[error("Knill-Laflamme condition violated (off-diagonal {offdiag:e}, diagonal spread {spread:e})")]
    KlViolation { offdiag: f64, spread: f64 },
    #[error("decoder synthesis failed: {0}")]
    Synthesis(String),
    #[error("Kraus labels do not match the recovery plan")]
    LabelMismatch,
    #[error("infeasible search: {0}")]
    InfeasibleSearch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("code file: {0}")]
    CodeFile(String),
}
