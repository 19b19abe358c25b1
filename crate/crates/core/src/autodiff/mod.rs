//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] records every primitive applied during a forward pass and
//! replays the record backwards to produce gradients. Trainable weights live in a
//! [`ParamSet`]; the graph borrows them, so building a record never copies a weight matrix.

mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use gradcheck::{grad_check, max_relative_error, GradCheckReport};
pub use graph::{Graph, Primitive, Var};
pub use params::{Gradients, ParamId, ParamSet};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
