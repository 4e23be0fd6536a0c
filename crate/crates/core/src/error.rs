use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("empty interaction store")]
    EmptyStore,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("index out of range: {what} {index} >= {bound}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("user {user} has no unobserved item to sample as a negative")]
    NoNegativeCandidate { user: usize },
    #[error("user {user} has no observed item")]
    NoPositive { user: usize },
    #[error("infeasible synthetic spec: {0}")]
    Infeasible(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite gradient in block `{block}`")]
    NonFiniteGradient { block: String },
    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Divergence {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("pair ({user}, {item}) is not observed")]
    Unobserved { user: usize, item: usize },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
