//! Dense reverse-mode automatic differentiation.

pub mod gradcheck;
mod tape;
mod tensor;

pub use tape::{grad_norm, Tape, Var};
pub(crate) use tape::softmax_in_place;
pub use tensor::Tensor;
