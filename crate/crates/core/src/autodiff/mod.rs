//! A small reverse-mode differentiation engine.
//!
//! Graphs are built once through [`Graph`]'s builder methods (which infer and
//! check shapes), then evaluated against named [`Bindings`] as often as
//! needed. A [`Session`] keeps every intermediate so [`Session::backward`] can
//! walk the nodes in exact reverse order, accumulating gradients across
//! fan-out.

mod exec;
pub mod gradcheck;
mod graph;
mod tensor;


pub use exec::{Bindings, Chain, Gradients, Session};
pub use gradcheck::{finite_difference_gradient, max_relative_error, relative_error, relu_margin};
pub use graph::{Graph, NodeId, NodeRef, Op, OpKind, L2_NORM_EPS};
pub use tensor::{Scalar, Tensor};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GraphError {
    #[error("shape mismatch at {node}: {detail}")]
    ShapeMismatch { node: NodeRef, detail: String },
    #[error("non-finite value produced by {0}")]
    NonFinite(NodeRef),
    #[error("backward called before forward")]
    CalledBeforeForward,
    #[error("output {0} is not scalar")]
    NonScalarOutput(NodeRef),
    #[error("no tensor bound for '{0}'")]
    Unbound(String),
    #[error("invalid shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} does not hold {len} elements")]
    DataLength { shape: Vec<usize>, len: usize },
}
