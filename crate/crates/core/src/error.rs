use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("not enumerable: {0}")]
    NotEnumerable(String),

    #[error("enumeration cap exceeded: {required} outcomes required, cap is {cap}")]
    CapExceeded { required: u128, cap: u64 },

    /// A structural hypothesis of a registry entry does not hold for the
    /// requested instance. Distinct from a FAIL verdict.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{field}: {message}")]
    Config { field: String, message: String },

    #[error("unknown theorem id: {0}")]
    UnknownTheorem(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn precondition(message: impl Into<String>) -> Self {
        Error::Precondition(message.into())
    }

    pub fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
