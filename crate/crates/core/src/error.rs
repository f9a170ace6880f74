use thiserror::Error;

/// Errors raised while loading, building, or solving a coordination case.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid model: {0}")]
    Invalid(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("solver failure ({status}): {detail}")]
    Solver { status: String, detail: String },

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("linearized re-solve drifted {drift:.3e} p.u. from the physical point (bound {bound:.1e})")]
    Drift { drift: f64, bound: f64 },

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Error {
        Error::AtIteration { iteration, source: Box::new(self) }
    }
}
