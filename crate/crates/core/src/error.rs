use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// The estimate cannot be formed from the data (zero variance, etc.).
    #[error("degenerate estimate: {0}")]
    Degenerate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A Monte Carlo run failed; carries the run index.
    #[error("run {run} failed: {source}")]
    Run { run: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    /// True for errors caused by an unusable (degenerate) estimate rather
    /// than by bad input.
    pub fn is_degenerate(&self) -> bool {
        match self {
            Error::Degenerate(_) => true,
            Error::Run { source, .. } => source.is_degenerate(),
            _ => false,
        }
    }
}
