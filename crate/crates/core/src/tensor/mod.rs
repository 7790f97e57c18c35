//! Dense `f64` tensors with tape-based reverse-mode differentiation.

mod autodiff;
mod gradcheck;
mod ops;
mod value;

pub use autodiff::{BackwardFn, Gradients, Tape, Var};
pub use gradcheck::{grad_check, GradCheckReport};
pub use value::Tensor;
