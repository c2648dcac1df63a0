//! Minimal dense numerics with tape-based reverse-mode differentiation.
//!
//! Only the operations a segmentation NCA needs are provided: depthwise
//! 3×3 perception, per-pixel affine maps, ReLU, channel softmax and
//! cross-entropy, plus the row gather/scatter plumbing used to update only
//! the cells that fire on a given step.

mod graph;
pub mod kernels;
mod tensor;

pub use graph::{Graph, Var};
pub use tensor::Tensor;
