//! Error type shared by the whole crate.
//!
//! Errors fall into three groups that the CLI maps onto exit codes:
//! input/format problems (exit 2), numerical failures such as degenerate
//! grids or Cholesky breakdowns (exit 3), and size-limit refusals (exit 4).

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("window length {l} out of range for series length {n} (need 1 < L < N)")]
    WindowOutOfRange { l: usize, n: usize },

    #[error("series length {n} too short for GLRR order {r}")]
    SeriesTooShort { n: usize, r: usize },

    #[error("series is identically zero")]
    ZeroSeries,

    #[error("coefficient vector is zero")]
    ZeroVector,

    #[error("AR(1) parameters out of range: need |phi| < 1 and sigma2 > 0")]
    NonstationaryAr,

    #[error("coefficient at position {index} must be -1, found {value}")]
    NotNormalized { index: usize, value: f64 },

    #[error("index {tau} out of range for order {r}")]
    TauOutOfRange { tau: usize, r: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("rotated eigenvalue grid is numerically degenerate (min |eig| = {min_abs:e})")]
    DegenerateGrid { min_abs: f64 },

    #[error("matrix is numerically rank deficient")]
    RankDeficient,

    #[error("Cholesky factorization broke down at pivot {pivot}: matrix numerically indefinite")]
    CholeskyBreakdown { pivot: usize },

    #[error("boundary submatrix is numerically singular (cond {cond:e})")]
    SingularBoundaryMinor { cond: f64 },

    #[error("reference GLRR projection collapsed (|a_tau| = {magnitude:e})")]
    NormalizationBreakdown { magnitude: f64 },

    #[error("problem size {n} exceeds limit {limit} for this operation")]
    SizeLimit { n: usize, limit: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Exit code the CLI reports for this error.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            InvalidInput(_)
            | WindowOutOfRange { .. }
            | SeriesTooShort { .. }
            | ZeroSeries
            | ZeroVector
            | NonstationaryAr
            | NotNormalized { .. }
            | TauOutOfRange { .. }
            | DimensionMismatch(_)
            | Io(_)
            | Csv(_)
            | Json(_) => 2,
            DegenerateGrid { .. }
            | RankDeficient
            | CholeskyBreakdown { .. }
            | SingularBoundaryMinor { .. }
            | NormalizationBreakdown { .. } => 3,
            SizeLimit { .. } => 4,
        }
    }
}
