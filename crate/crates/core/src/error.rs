use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("experiment matrix row {row} sums to {sum}, above 1")]
    RowSumExceedsOne { row: usize, sum: f64 },

    #[error("observation at ({i}, {j}) is nonzero but its probability is zero")]
    ZeroProbabilityObservation { i: usize, j: usize },

    #[error("observation at ({i}, {j}) is nonzero outside the realized allocation")]
    ObservationOutsideAllocation { i: usize, j: usize },

    #[error("hajek estimator undefined: zero normalizer on the {arm} arm")]
    HajekUndefined { arm: &'static str },

    #[error("estimator inconsistency at trial {trial}: {source}")]
    TrialFailed {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("solver failed at stream step {step}: residual {residual:.3e}")]
    OnlineSolverFailure { step: usize, residual: f64 },

    #[error("grid oracle instance too large: {entries} entries (cap {cap})")]
    GridOracleTooLarge { entries: usize, cap: usize },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
}
