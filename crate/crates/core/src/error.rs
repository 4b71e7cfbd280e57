use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed neighborhood system, graph or lattice shape.
    #[error("structural error: {0}")]
    Structural(String),

    /// The request needs something the input does not provide
    /// (a higher dependence level, an exact enumerator, a bounded constant).
    #[error("capability error: {0}")]
    Capability(String),

    /// A variance or scale that must be positive came out nonpositive.
    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Config validation failure; carries the offending field path.
    #[error("usage error at `{path}`: {message}")]
    Usage { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn usage(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Usage {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
