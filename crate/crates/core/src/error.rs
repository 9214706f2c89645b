use thiserror::Error;

/// Errors surfaced by the numerical layers.
///
/// Every fallible operation validates its inputs up front and returns one of
/// these instead of producing silently wrong numbers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("dyadic level {level} exceeds the supported maximum {max}")]
    LevelTooLarge { level: u32, max: u32 },

    #[error("step count {n} must be a power of two between 1 and {fine}")]
    BadStepCount { n: usize, fine: usize },

    #[error("matrix dimension {dim} exceeds the supported maximum {max}")]
    DimensionTooLarge { dim: usize, max: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("operators must commute for this flow (commutator norm {norm:.3e}, tolerance {tol:.3e})")]
    NonCommuting { norm: f64, tol: f64 },

    #[error("drift splitting must satisfy a1 + a2 = drift entrywise")]
    SplitMismatch,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("weights must be nonnegative with a positive total (total {total:.3e})")]
    BadWeights { total: f64 },

    #[error("exponent {value:.3e} at grid coordinate {node} exceeds the overflow guard {limit}")]
    ExponentOverflow { value: f64, node: f64, limit: f64 },

    #[error("state has relative mass {mass:.3e} in the outer 10% of the grid (limit {limit:.1e})")]
    BoundaryMass { mass: f64, limit: f64 },

    #[error("collapse rate too low: mu*T = {mu_t} but at least {min} events are required")]
    TooFewCollapses { mu_t: f64, min: f64 },

    #[error("cannot normalize a state with zero norm")]
    ZeroNorm,

    #[error("{0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
