use thiserror::Error;

/// Failure modes shared by every module.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// A configuration value violates the parameter constraints.
    #[error("configuration error: {0}")]
    Config(String),
    /// A numerical procedure failed to meet its tolerance.
    #[error("numerical error: {message} (estimate {estimate:e})")]
    Numerical { message: String, estimate: f64 },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>, estimate: f64) -> Self {
        Error::Numerical {
            message: msg.into(),
            estimate,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
