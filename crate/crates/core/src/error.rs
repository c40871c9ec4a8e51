use thiserror::Error;

/// Errors surfaced by the pipeline. The CLI maps these onto exit codes:
/// invalid input 1, ambiguous automaton 2, numerical failure 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("ambiguous automaton: two accepting runs diverge at states ({0}, {1}) after reading {2:?}")]
    Ambiguous(String, String, Vec<String>),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    /// Process exit code associated with this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::Invalid(_) => 1,
            Error::Ambiguous(..) => 2,
            Error::Numerical(_) | Error::Internal(_) => 3,
        }
    }
}
