//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records primitive operations as they run; [`Tape::backward`]
//! sweeps it once in reverse. [`finite_diff_oracle`] is the independent check
//! used throughout the test suite.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_oracle, finite_diff_oracle_o4, max_relative_error};
pub use params::ModelParams;
pub use tape::{Gradients, OpKind, Tape, Var};
pub use tensor::Tensor;

