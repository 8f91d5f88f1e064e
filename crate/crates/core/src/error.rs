use cat_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CatError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("weight file error at byte {offset}: {reason}")]
    Weights { offset: usize, reason: String },
    #[error("weight entry `{name}`: {reason}")]
    Entry { name: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CatError> = std::result::Result<T, E>;

pub(crate) fn config(msg: impl Into<String>) -> CatError {
    CatError::Config(msg.into())
}
