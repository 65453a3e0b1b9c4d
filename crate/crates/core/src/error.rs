use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("{}:{line}: {message}", path.display())]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index {index} outside vocabulary of size {size}")]
    Vocab { index: usize, size: usize },

    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    Numerical { epoch: usize, batch: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("token kind error: {0}")]
    Kind(String),

    #[error("routing error: {0}")]
    Routing(String),

    #[error("degenerate agreement table: {0}")]
    Degenerate(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("model container error: {0}")]
    Persist(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// The innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Whether the error comes from configuration or usage rather than
    /// from the data being processed.
    pub fn is_config(&self) -> bool {
        matches!(self.root(), Error::Config(_) | Error::Persist(_))
    }

    pub(crate) fn at(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(
        path: impl Into<PathBuf>,
        line: usize,
        message: impl Into<String>,
    ) -> Self {
        Error::Format {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
