use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] io::Error),

    /// Input that does not follow its documented line format.
    #[error("{what}, line {line}: {message}")]
    Malformed {
        what: &'static str,
        line: usize,
        message: String,
    },

    #[error("knowledge base: {0}")]
    KnowledgeBase(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("duplicate unit id `{0}`")]
    DuplicateUnit(String),

    #[error("index has no units")]
    EmptyIndex,

    #[error("run for topic `{0}` is not sorted by rank")]
    UnsortedRun(String),

    #[error("every topic is NA; no aggregate is defined")]
    AllNa,

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    pub(crate) fn malformed(what: &'static str, line: usize, message: impl Into<String>) -> Self {
        Error::Malformed {
            what,
            line,
            message: message.into(),
        }
    }
}
