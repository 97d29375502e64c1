use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: String,
        expected: String,
        got: String,
    },

    #[error("block index ({row}, {col}) out of range for a {rows}x{cols} block partition")]
    BlockIndex {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("R + B'PB is not positive definite to tolerance (reciprocal condition {rcond:e})")]
    IllPosedCost { rcond: f64 },

    #[error("invalid probability row: {0}")]
    Probability(String),

    #[error("eigenvalue iteration did not converge for a {0}x{0} matrix")]
    EigenNoConvergence(usize),

    #[error("matrix is not positive semidefinite: minimum eigenvalue {min_eig:e}")]
    NotPsd { min_eig: f64 },

    #[error("lifted stability matrix would be {dim}x{dim}; use the triangular shortcut")]
    TooLarge { dim: usize },

    #[error("transition matrix does not have the absorbing-mode-0 pattern")]
    UnrecognizedPattern,

    #[error("steady-state solution did not converge")]
    NotConverged,

    #[error("state became non-finite at step {step} of run {run}")]
    NonFiniteState { run: u64, step: usize },

    #[error("horizon mismatch: solution covers {solution} steps, run asks for {requested}")]
    HorizonMismatch { solution: usize, requested: usize },
}

impl Error {
    pub(crate) fn dim(
        what: impl Into<String>,
        expected: impl ToString,
        got: impl ToString,
    ) -> Self {
        Error::Dimension {
            what: what.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
