//! Dense tensors, a reverse-mode tape and a finite-difference gradient checker.

pub mod gradcheck;
pub mod ops;
pub mod rng;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_many, GradCheckReport};
pub use tape::{gelu, Tape, Var};
pub use tensor::Tensor;
