use std::path::PathBuf;

use crate::model::{Level, Side};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("span {start}..{end} is outside the document (length {len})")]
    Range { start: usize, end: usize, len: usize },

    #[error("constituent {0} does not belong to this document")]
    Ownership(u32),

    #[error("expected a {expected:?} constituent, got {found:?}")]
    Level { expected: Level, found: Level },

    #[error("illegal bead shape {0}:{1}")]
    Shape(usize, usize),

    #[error("({source_type}, {target_type}) never co-occur in a linked phrase pair")]
    NotACandidate {
        source_type: String,
        target_type: String,
    },

    #[error("{side} word {word:?} does not occur in the corpus")]
    UnknownWord { word: String, side: Side },

    #[error("no bitext with id {0:?}")]
    UnknownBitext(String),

    #[error("the archive has no counterword lexicon")]
    NoLexicon,

    #[error("invalid structure: {0}")]
    Invalid(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("invalid pattern for {key}: {message}")]
    Pattern { key: String, message: String },

    #[error("archive format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: String, expected: u32 },

    #[error("integrity failure in {file} line {line}: {reason}")]
    Integrity {
        file: String,
        line: usize,
        reason: String,
    },

    #[error("truncated archive file {file}: {reason}")]
    Truncated { file: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
