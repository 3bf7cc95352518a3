use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at data row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("column `{0}` is not a word-set column")]
    NotWordSet(String),

    #[error("no column named `{0}`")]
    UnknownColumn(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("insufficient vocabulary: {0}")]
    InsufficientVocabulary(String),

    #[error("`{0}` is not in the vocabulary")]
    OutOfVocabulary(String),

    #[error("similarity undefined: {0}")]
    UndefinedSimilarity(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("skill `{0}` is not covered by the encoder")]
    Coverage(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
