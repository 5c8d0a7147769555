use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("matrix is singular (pivot {pivot:e} in column {column})")]
    Singular { column: usize, pivot: f64 },

    #[error("matrix is not row-stochastic: {0}")]
    NotStochastic(String),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("the recurrence is only defined for a single timeout value (got {0}); use the matrix method")]
    RecurrenceNeedsSingleTimeout(usize),

    #[error("loss rate is 0: the chain never absorbs, so the fundamental matrix and split moments are undefined")]
    NoAbsorption,

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("no follower reached candidacy in any trial")]
    NoCandidacies,

    #[error("all {0} trials were censored")]
    AllCensored(usize),

    #[error("empty input: {0}")]
    Empty(&'static str),
}
