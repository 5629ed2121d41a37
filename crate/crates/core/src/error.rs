use alloc::string::String;

/// Errors raised by map construction, state validation and the diagnostics.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty spectrum")]
    EmptySpectrum,
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("zero vector")]
    ZeroVector,
    #[error("not a density matrix: {0}")]
    InvalidState(String),
    #[error("maps act on different block structures")]
    BlockMismatch,
    #[error("no Kraus form at this instant (min eigenvalue {0:e})")]
    NoKrausForm(f64),
    #[error("family not invertible at block ({0}, {1})")]
    NotInvertible(usize, usize),
    #[error("no admissible coarse-graining: {0}")]
    NoAdmissibleCoarseGraining(String),
    #[error("times must be strictly increasing")]
    NonMonotoneTimes,
    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("dimension {0} exceeds the dense extended-state limit of {limit}", limit = crate::markov::JAMIOLKOWSKI_MAX_DIM)]
    TooLarge(usize),
    #[error("state must be supported on exactly two levels, found {0}")]
    SupportNotTwoLevels(usize),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
