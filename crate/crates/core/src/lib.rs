//! Hierarchical Tucker tensor arithmetic with a serial reference
//! implementation, a message-passing backend with one worker per tree node,
//! and iterative solvers for parameter-dependent diffusion problems.

pub mod arith;
pub mod bench;
pub mod cookie;
pub mod dist;
pub mod error;
pub mod htucker;
pub mod kernels;
pub mod solvers;
pub mod tree;

pub use error::{HtError, Result};
pub use htucker::{GeneralizedMatrix, HTOperator, HTensor, NodeData, OperatorNode, RankVector};
pub use kernels::{CsrMatrix, DenseTensor, Matrix, Tensor3};
pub use tree::{DimensionTree, NodeId};
