//! Dense tensors and a dynamic reverse-mode tape.
//!
//! Every computation in the crate runs in `f64`. A fresh [`Tape`] is built per
//! sentence; learnable tensors live in a [`ParamStore`] and enter the tape as
//! borrowed parameter leaves, so recording a forward pass never copies the
//! embedding tables.

mod params;
mod tape;
mod tensor;

pub use params::{ParamGrads, ParamId, ParamStore};
pub use tape::{matmul_nn, sigmoid, Axis, CustomBackward, ElementwiseOp, Tape, Var};
pub use tensor::Tensor;
