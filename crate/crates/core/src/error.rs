use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("problem must have at least one variable")]
    EmptyProblem,

    #[error("variable {index} is not free at this node")]
    IndexNotFree { index: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("power iteration did not converge after {iterations} iterations (relative change {change:e})")]
    ConvergenceFailure { iterations: usize, change: f64 },

    #[error("non-finite primal objective at iteration {iteration}")]
    NonFiniteIterate { iteration: usize },

    #[error("incumbent has no nonzero coefficient among the free variables")]
    NoBranchCandidate,

    #[error("enumeration would visit {supports} supports (limit {limit})")]
    InstanceTooLarge { supports: u128, limit: u128 },

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
