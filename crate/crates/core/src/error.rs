use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}x{expected}, found {rows}x{cols}")]
    DimensionMismatch { expected: usize, rows: usize, cols: usize },

    #[error("invalid Hilbert space: {0}")]
    InvalidHilbert(String),

    #[error("Fock index {index} exceeds n_max = {n_max}")]
    IndexOutOfRange { index: usize, n_max: usize },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("operator is not Hermitian: imaginary expectation part {0:.3e}")]
    NotHermitian(f64),

    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),

    #[error("Q-function grid too small: normalization deficit {deficit:.3e} exceeds {limit:.1e}")]
    GridTooSmall { deficit: f64, limit: f64 },

    #[error("invalid grid specification: {0}")]
    InvalidGrid(String),

    #[error("invalid cavity QED parameters: {0}")]
    InvalidQed(String),

    #[error("probe detuning is zero; the measurement strength is singular")]
    ZeroDetuning,

    #[error("all {0} trajectories of the ensemble were invalid")]
    AllTrajectoriesInvalid(usize),

    #[error("invalid ensemble specification: {0}")]
    InvalidEnsemble(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
