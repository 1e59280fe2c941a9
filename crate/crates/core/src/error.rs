use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{source_name}: line {line}: {message}")]
    Ingest {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("{0}: input is empty")]
    EmptyInput(String),

    #[error("vector length mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite component in vector")]
    NonFinite,

    #[error("image store is empty")]
    EmptyStore,

    #[error("neighbour set is empty")]
    EmptyNeighbors,

    #[error("no captions available among the retrieved images")]
    NoCaptions,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("decision matrix: {0}")]
    Matrix(String),

    #[error("no features for image `{0}`")]
    MissingFeatures(String),

    #[error("no reference captions for image `{0}`")]
    MissingReferences(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn ingest(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Ingest {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }
}
