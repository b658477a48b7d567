use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("non-positive velocity {value} at node {node}")]
    NonPositiveVelocity { node: usize, value: f64 },
    #[error("domain too small: {0}")]
    DomainTooSmall(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("operator dimension {dim} exceeds the spectral-path cap {cap} and the Chebyshev path is disabled")]
    EigUnavailable { dim: usize, cap: usize },
    #[error("sampling interval tau = {tau} s exceeds the Nyquist limit {limit} s")]
    NyquistViolation { tau: f64, limit: f64 },
    #[error("time step dt = {dt} s violates the stability bound {limit} s")]
    CflViolation { dt: f64, limit: f64 },
    #[error("record too short: need {needed} s, have {available} s")]
    InsufficientRecordLength { needed: f64, available: f64 },
    #[error("mass matrix is not positive definite (failed at block {block})")]
    MassNotSpd { block: usize },
    #[error("restriction size {k} outside 1..={n}")]
    IndexOutOfRange { k: usize, n: usize },
    #[error("band depth {d} outside 1..={k}")]
    BandExceedsMatrix { d: usize, k: usize },
    #[error("residual length {rows} is shorter than the parameter count {cols}")]
    ResidualShorterThanN { rows: usize, cols: usize },
    #[error("regularized normal equations are singular")]
    SingularSystem,
    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidGrid(_)
            | Error::InvalidParameter(_)
            | Error::DomainTooSmall(_)
            | Error::GridMismatch(_)
            | Error::BandExceedsMatrix { .. }
            | Error::IndexOutOfRange { .. }
            | Error::ResidualShorterThanN { .. }
            | Error::InsufficientRecordLength { .. }
            | Error::NyquistViolation { .. }
            | Error::CflViolation { .. }
            | Error::EigUnavailable { .. }
            | Error::Config(_)
            | Error::Json(_) => ErrorKind::Config,
            Error::NonPositiveVelocity { .. }
            | Error::MassNotSpd { .. }
            | Error::SingularSystem
            | Error::LinearAlgebra(_) => ErrorKind::Numerical,
            Error::Format { .. } | Error::Io(_) | Error::Csv(_) => ErrorKind::Io,
        }
    }
}
