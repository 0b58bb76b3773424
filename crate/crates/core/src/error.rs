use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} did not converge within {terms} terms")]
    NonConvergence { what: String, terms: usize },

    #[error("truncation too small: {0}")]
    Truncation(String),

    #[error("rejection sampler exceeded {attempts} attempts (acceptance rate {rate:.3e}); subdivide the time argument")]
    RejectionCap { attempts: u64, rate: f64 },

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
