use thiserror::Error;

/// Failure classes shared by every module.
///
/// The CLI maps each class onto a distinct exit code, so the split between
/// `Data`, `Domain` and `Numerical` matters beyond the message text.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input data (shapes, lengths, unvisited states).
    #[error("data error: {0}")]
    Data(String),
    /// A value outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// An algorithm failed to produce a finite or converged answer.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Invalid configuration values.
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Short machine-readable tag for the failure class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Data(_) | Error::Csv(_) | Error::Json(_) => "data",
            Error::Domain(_) => "domain",
            Error::Numerical(_) => "numerical",
            Error::Config(_) | Error::Toml(_) => "config",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
