use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] krew_core::Error),

    #[error(transparent)]
    Gan(#[from] krew_ctgan::Error),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bundle format version {found} is not supported (this build reads version {supported})")]
    Incompatible { found: u32, supported: u32 },

    #[error("bundle member `{member}` is corrupt: {detail}")]
    Corrupt { member: String, detail: String },

    #[error("invalid argument: {0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(member: &str, detail: impl Into<String>) -> Self {
        Error::Corrupt {
            member: member.to_string(),
            detail: detail.into(),
        }
    }
}
