use std::fmt;

use thiserror::Error;

/// Why a chain failed the ergodicity check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErgodicityFailure {
    /// The support digraph is not strongly connected.
    Reducible,
    /// Irreducible, but the gcd of cycle lengths is larger than one.
    Periodic { period: usize },
}

impl fmt::Display for ErgodicityFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Reducible => write!(f, "reducible"),
            Self::Periodic { period } => write!(f, "periodic with period {period}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: row {row} has {len} entries, expected {expected}")]
    NonSquare {
        row: usize,
        len: usize,
        expected: usize,
    },

    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("row {row} sums to 1 {deviation:+e}, outside tolerance")]
    RowSumOutOfTolerance { row: usize, deviation: f64 },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("state {state} at position {position} is outside [0, {d})")]
    StateOutOfRange {
        position: usize,
        state: usize,
        d: usize,
    },

    #[error("trajectory of length {m} is too short (need at least {required})")]
    TooShort { m: usize, required: usize },

    #[error("distribution is not stationary for the chain (residual {residual:e})")]
    NotStationary { residual: f64 },

    #[error("stationary mass of state {state} is zero")]
    ZeroStationaryMass { state: usize },

    #[error("power iteration did not converge after {iterations} iterations")]
    PowerIterationNoConvergence { iterations: usize },

    #[error("chain is not ergodic: {0}")]
    NotErgodic(ErgodicityFailure),

    #[error("mixing did not occur within {t_cap} steps")]
    CapExceeded { t_cap: usize },

    #[error("chain is not reversible: detailed balance fails at ({i}, {j}) by {deviation:e}")]
    NotReversible { i: usize, j: usize, deviation: f64 },

    #[error("no spectral gap available for the mixing-time bracket")]
    MissingGap,

    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("invalid family specification: {0}")]
    InvalidSpec(String),

    #[error("counts sum to {found}, expected {expected}")]
    CountMismatch { expected: usize, found: usize },

    #[error("insufficient sample: need {needed}, have {available}")]
    InsufficientSample { needed: usize, available: usize },

    #[error("trajectory length {m} is below the required {required} (deficit {})", required - m)]
    TrajectoryTooShort { m: usize, required: usize },

    #[error("instance too large: {size} exceeds limit {limit}")]
    InstanceTooLarge { size: f64, limit: f64 },

    #[error("conditioning event has probability zero")]
    ZeroProbabilityEvent,

    #[error("calibration failed: multiplier {max_multiplier} still misses the error target")]
    CalibrationFailed { max_multiplier: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
