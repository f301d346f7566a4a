//! Minimal dense-tensor core: row-major `f64` tensors, a reverse-mode tape
//! over a small primitive set, and the Adam optimizer.

mod kernels;
mod optim;
mod tape;
mod tensor;

pub use optim::{adam_step, AdamConfig, ParamEntry, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
