use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: {dim} expected {expected}, got {actual}")]
    Shape {
        context: String,
        dim: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("node `{node}`: {source}")]
    Node {
        node: String,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("{path}: row {row}: {message}")]
    Manifest {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("missing files: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingFiles(Vec<PathBuf>),

    #[error("image {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("weight archive: {0}")]
    Archive(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("empty data: {0}")]
    Empty(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(
        context: impl Into<String>,
        dim: &'static str,
        expected: usize,
        actual: usize,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            dim,
            expected,
            actual,
        }
    }

    pub(crate) fn at_node(self, node: &str) -> Self {
        Error::Node {
            node: node.to_string(),
            source: Box::new(self),
        }
    }

    /// Innermost error, looking through node wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Node { source, .. } => source.root(),
            other => other,
        }
    }
}
