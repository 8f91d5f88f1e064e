use std::path::Path;

use cat_core::CatError;
use cat_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("image: {0}")]
    Image(String),
    #[error("io: {0}")]
    Io(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Model(#[from] CatError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl HarnessError {
    /// Prefixes image errors with the file they came from.
    pub(crate) fn at(self, path: &Path) -> Self {
        match self {
            HarnessError::Image(m) => HarnessError::Image(format!("{}: {m}", path.display())),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
