use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong in the estimators, simulators and file readers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("harmonic pole: beta = {beta} is too close to 1 for the continued partial sum")]
    HarmonicPole { beta: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient data: {what} (need {needed}, got {got})")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("solver did not converge after {iterations} iterations (best params {best:?})")]
    NonConvergence { iterations: usize, best: [f64; 2] },

    #[error("objective is not finite at params {params:?}")]
    NonFiniteObjective { params: Vec<f64> },

    #[error("singular normal matrix: parameters are not identifiable from the data")]
    Singular,

    #[error("population of {requested} queries exceeds the memory cap of {cap}")]
    CapExceeded { requested: u64, cap: u64 },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("line {line}: duplicate query {query:?}")]
    DuplicateQuery { line: u64, query: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical machinery as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::HarmonicPole { .. }
                | Error::NonConvergence { .. }
                | Error::NonFiniteObjective { .. }
                | Error::Singular
        )
    }
}
