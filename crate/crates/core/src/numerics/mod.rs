//! Dense tensors, a reverse-mode tape, Adam, and a central-difference
//! gradient oracle.
//!
//! Production code runs in `f32`; the same code instantiated at `f64` is
//! what the gradient checks use.

mod adam;
mod fd;
mod real;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use fd::{central_difference, relative_error};
pub use real::Real;
pub use tape::{Grads, Tape, Var};
pub use tensor::Tensor;
