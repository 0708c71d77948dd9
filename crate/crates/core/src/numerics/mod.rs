//! Dense `f64` tensors, reverse-mode differentiation and the Adam optimizer.

pub mod kernels;
mod optim;
mod params;
mod tape;
mod tensor;

pub use optim::{adam_step, OptimizerState, DEFAULT_LEARNING_RATE};
pub use params::{ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
