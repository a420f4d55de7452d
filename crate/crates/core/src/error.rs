use std::path::PathBuf;

use thiserror::Error;

/// Failures surfaced by the library. The CLI maps these onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("region mask selects no grid cell")]
    EmptyMask,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("stability violation: {0}")]
    Stability(String),
    #[error("solver diverged: {0}")]
    Divergence(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by bad input rather than numerics.
    pub fn is_usage(&self) -> bool {
        !matches!(
            self,
            Error::Numerical(_) | Error::Stability(_) | Error::Divergence(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! ensure_arg {
    ($cond:expr, $($fmt:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err($crate::error::Error::Argument(format!($($fmt)+)));
        }
    };
}
pub(crate) use ensure_arg;
