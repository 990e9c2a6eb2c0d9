use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("{0}")]
    Domain(String),

    /// Input is well-formed but violates an invariant (run outside the
    /// candidate set, mismatched sizes, unsatisfiable constraints, ...).
    #[error("{0}")]
    Validation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("model matrix is singular: {0}")]
    Singular(String),

    /// Every start of a search stayed singular.
    #[error("degenerate search: {0}")]
    Degenerate(String),

    #[error("unknown search strategy `{name}` (known: {known})")]
    UnknownStrategy { name: String, known: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True for errors caused by user input rather than a bug or an
    /// environment failure.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Internal(_))
    }
}
