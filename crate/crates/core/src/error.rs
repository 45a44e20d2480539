use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong between PSD specification and reconstruction.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),
    #[error("bin range [{lo}, {hi}) is outside the grid of length {len}")]
    RangeOutOfGrid { lo: usize, hi: usize, len: usize },
    #[error("blocks overlap at bin {bin}")]
    OverlappingBlocks { bin: usize },
    #[error("spectrum is not conjugate symmetric at bin {bin} (mirror {mirror})")]
    AsymmetricSpectrum { bin: usize, mirror: usize },
    #[error("block [{lo}, {hi}) has non-positive level {level}")]
    ZeroLevel { lo: usize, hi: usize, level: f64 },
    #[error("cannot place the requested blocks: {0}")]
    InfeasiblePlacement(String),
    #[error("specs do not share one frequency grid ({expected} vs {found})")]
    GridMismatch { expected: usize, found: usize },
    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("dimension error: {0}")]
    DimensionError(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("matrix is rank deficient: {0}")]
    RankDeficient(String),
    #[error("singular interpolation system (condition number {condition:e})")]
    SingularSystem { condition: f64 },
    #[error("reconstruction has imaginary residue {residue:e} above tolerance {tolerance:e}")]
    ImaginaryResidue { residue: f64, tolerance: f64 },
    #[error("reference signal is identically zero")]
    ZeroReference,
    #[error("covariance rank {rank} is below the requested {requested} components")]
    DegenerateCovariance { rank: usize, requested: usize },
    #[error("power spectrum is identically zero")]
    EmptySupport,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("{path}:{line}: non-numeric cell {cell:?}")]
    NonNumericCell {
        path: PathBuf,
        line: u64,
        cell: String,
    },
    #[error("malformed input: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse classification used by front ends to pick exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            InvalidGrid(_)
            | RangeOutOfGrid { .. }
            | OverlappingBlocks { .. }
            | AsymmetricSpectrum { .. }
            | ZeroLevel { .. }
            | InfeasiblePlacement(_)
            | GridMismatch { .. }
            | DimensionError(_)
            | DomainError(_) => ErrorClass::Config,
            SizeMismatch { .. }
            | InsufficientData(_)
            | NonNumericCell { .. }
            | Format(_)
            | Io { .. }
            | Json(_)
            | Csv(_)
            | EmptySupport
            | ZeroReference => ErrorClass::Data,
            RankDeficient(_)
            | SingularSystem { .. }
            | ImaginaryResidue { .. }
            | DegenerateCovariance { .. } => ErrorClass::Numerical,
        }
    }
}
