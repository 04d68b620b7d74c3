use thiserror::Error;

/// Errors shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("unsupported Sobolev order {0} (maximum 4)")]
    UnsupportedOrder(usize),
    #[error("degenerate flow map: min J = {min_j:.3e} (threshold {threshold:.1e})")]
    DegenerateMap { min_j: f64, threshold: f64 },
    #[error("degenerate state: {0}")]
    DegenerateState(String),
    #[error("Robin problem not coercive: K = {k:.3e} <= required {required:.3e}")]
    NotCoercive { k: f64, required: f64 },
    #[error("incompatible pure-Neumann problem: weighted mean of rhs = {0:.3e}")]
    Incompatible(f64),
    #[error("linear solver did not converge: residual {residual:.3e} after {iters} iterations")]
    NoConvergence { residual: f64, iters: usize },
    #[error("data adjustment failed: {0}")]
    AdjustmentFailure(String),
    #[error("fixed-point iteration lost contraction: ratios {0:?}")]
    NoContraction(Vec<f64>),
    #[error("state invariant violated: {0}")]
    StateInvariantViolated(String),
    #[error("history ring holds {have} levels, {need} needed")]
    InsufficientHistory { have: usize, need: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
