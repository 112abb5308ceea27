use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A distribution or configuration parameter is out of its domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    /// Input data violates a model invariant (bad area, inconsistent shape).
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The posterior propriety conditions do not hold for this dataset/model.
    #[error("posterior propriety conditions violated: {0}")]
    Precondition(String),

    /// The chain reached a state where a full conditional is undefined.
    #[error("degenerate sampler state: {0}")]
    DegenerateState(String),

    #[error("quadrature did not converge for area {area}: {reason}")]
    Quadrature { area: usize, reason: String },

    #[error("empty input: {0}")]
    Empty(String),

    /// Wraps an error raised inside one (replication, method) fit of an experiment.
    #[error("replication {replication}, method {method}: {source}")]
    Experiment {
        replication: usize,
        method: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::DegenerateState(_) | Error::Quadrature { .. } | Error::Factorization(_) => true,
            Error::Experiment { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
