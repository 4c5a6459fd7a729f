use std::path::PathBuf;

/// Errors raised by the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: line {line}: {message}")]
    Parse {
        context: String,
        line: usize,
        message: String,
    },

    #[error("malformed data: {0}")]
    Format(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dim { expected: usize, actual: usize },

    #[error("duplicate id: {0}")]
    Dup(String),

    #[error("row {row} of {passage_id} has norm {norm}, expected 1")]
    Norm {
        passage_id: String,
        row: usize,
        norm: f32,
    },

    #[error("size error: {0}")]
    Size(String),

    #[error("passage count {0} outside 2..=5")]
    Arity(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("mock oracle spec error: {0}")]
    Spec(String),

    #[error("run inconsistency: {0}")]
    Consistency(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            line,
            message: message.into(),
        }
    }

    /// True for errors that indicate a bug rather than bad input.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::Invariant(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
