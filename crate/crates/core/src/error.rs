use std::io;
use std::path::PathBuf;

/// Failure modes shared by every module of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("infeasible CTC target: {needed} frames required but only {available} available")]
    Infeasible { needed: usize, available: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("unknown character {0:?}")]
    UnknownChar(char),
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),
    #[error("malformed data in {}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Process exit code used by the command line tool.
    ///
    /// 2 config, 3 data, 4 numeric, 5 compatibility. Code 1 is reserved for
    /// failed checks and is never produced from an error value.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io { .. } | Error::Format { .. } | Error::UnknownChar(_) => 3,
            Error::Infeasible { .. } => 3,
            Error::NonFinite(_) | Error::Domain(_) | Error::Dimension { .. } => 4,
            Error::VocabMismatch(_) => 5,
        }
    }
}
