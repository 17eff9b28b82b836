use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad store header: expected magic {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("store format version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("store kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: String, found: String },

    #[error("corrupt store: {0}")]
    Corrupt(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value at batch index {index}")]
    NonFinite { index: usize },

    #[error("training diverged at step {step}")]
    Diverged { step: usize },

    #[error("missing artifact `{artifact}`; run stage `{stage}` first")]
    MissingArtifact { artifact: String, stage: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("summarizer failed: {0}")]
    Summarizer(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
