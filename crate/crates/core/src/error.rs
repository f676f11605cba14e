use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty task corpus")]
    EmptyTaskCorpus,

    #[error("merge produced empty vocabulary")]
    EmptyMerge,

    #[error("invalid token {text:?}: {reason}")]
    InvalidToken { text: String, reason: &'static str },

    #[error("duplicate token {0:?}")]
    DuplicateToken(String),

    #[error("target size {target} is below the {fallback} single-character fallback tokens")]
    FallbackCoverage { target: usize, fallback: usize },

    #[error("dimension mismatch: expected {expected} buckets, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Input { path: PathBuf, msg: String },

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn input(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        Error::Input {
            path: path.into(),
            msg: msg.to_string(),
        }
    }

    /// Process exit code for the CLI: 1 config, 2 input, 3 internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::FallbackCoverage { .. } => 1,
            Error::Invariant(_) => 3,
            _ => 2,
        }
    }
}
