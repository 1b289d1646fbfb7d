use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("linear program is infeasible (phase-one objective {objective:e})")]
    Infeasible { objective: f64 },

    /// An iterative routine hit its cap. `history` holds the residual of every
    /// completed (outer) iteration so callers can report the trajectory.
    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64, history: Vec<f64> },

    #[error("reconstruction of item {index} failed: {source}")]
    Reconstruction {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("average precision is undefined for an empty relevant set")]
    UndefinedAveragePrecision,

    #[error("problem of size {rows}x{cols} exceeds the dense limit of {limit}")]
    TooLarge { rows: usize, cols: usize, limit: usize },
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
