//! Dense channels-last tensors and a record-replay gradient tape covering
//! the primitives of a windowed-attention image restoration network.

mod element;
mod error;
pub mod gradcheck;
pub mod ops;
mod optim;
mod tape;
mod tensor;

pub use element::{Element, MASK_VALUE};
pub use error::{Result, TensorError};
pub use optim::{adam_update, Adam, AdamMoments, OptimizerHyper};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
