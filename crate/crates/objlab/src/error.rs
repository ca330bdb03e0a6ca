use thiserror::Error;

/// Errors shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),

    #[error("variable `{0}` must have cardinality >= 1")]
    EmptyVariable(String),

    #[error("joint size {cells} exceeds the {limit}-cell guard")]
    SizeGuardExceeded { cells: u128, limit: u128 },

    #[error("table has {got} entries, space requires {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("negative probability {0}")]
    NegativeProbability(f64),

    #[error("distribution sums to {sum}, expected {expected} within {tol}")]
    NotNormalized { sum: f64, expected: f64, tol: f64 },

    #[error("conditional row {row} sums to {sum}, expected 1")]
    RowNotNormalized { row: usize, sum: f64 },

    #[error("subsets must be pairwise disjoint (variable `{0}` repeated)")]
    OverlappingSubsets(String),

    #[error("tables are defined over different spaces")]
    SpaceMismatch,

    #[error("absolute continuity violated: p = {p} where target is zero (cell {cell})")]
    AbsoluteContinuity { cell: usize, p: f64 },

    #[error("invalid factorization: {0}")]
    InvalidFactorization(String),

    #[error("reward for outcome {0} is not finite")]
    NonFiniteReward(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature grid inadequate: density mass {mass} differs from {expected} by more than {tol}")]
    GridInadequate { mass: f64, expected: f64, tol: f64 },

    #[error("optimization diverged at step {step} (loss {loss})")]
    OptimizationDiverged { step: usize, loss: f64 },

    #[error("simplex search resolution {0} too coarse; need at least 10 points per dimension")]
    ResolutionTooCoarse(usize),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
