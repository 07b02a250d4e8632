use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of its domain. `field` names the offending key.
    #[error("invalid configuration `{field}`: {message}")]
    Config { field: String, message: String },

    /// An operation was called with inconsistent arguments.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// Parameters outside the domain of a closed-form result.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("budget exceeded: {requested:.3e} agent-steps requested, cap is {cap:.3e} (use --allow-large to lift it)")]
    Budget { requested: f64, cap: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { field: field.into(), message: message.into() }
    }

    pub(crate) fn usage(message: impl Into<String>) -> Self {
        Error::Usage(message.into())
    }

    pub(crate) fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }
}
