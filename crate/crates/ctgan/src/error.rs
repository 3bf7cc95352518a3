use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid training config: {0}")]
    Config(String),

    #[error("non-finite value at epoch {epoch}: {detail}")]
    Numeric { epoch: usize, detail: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Core(#[from] krew_core::Error),
}
