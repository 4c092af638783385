use thiserror::Error;

/// Errors raised by the reconstruction library.
#[derive(Debug, Error)]
pub enum Error {
    /// Array shapes do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// NaN/Inf appeared, or an iterative solve broke down.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// A precondition on the arguments was violated.
    #[error("contract violation: {0}")]
    Contract(String),
    /// Stored data (checkpoint, dataset, config) does not match what the caller expects.
    #[error("incompatible: {0}")]
    Compatibility(String),
    /// The paired test has no non-zero differences.
    #[error("test undefined: {0}")]
    UndefinedTest(String),
    /// Malformed bytes or documents.
    #[error("format error: {0}")]
    Format(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($fmt:tt)+) => {
        {
            let holds: bool = $cond;
            if !holds {
                return Err($crate::error::Error::$variant(format!($($fmt)+)));
            }
        }
    };
}
pub(crate) use ensure;
