use thiserror::Error;

/// Errors produced by tensor construction, arithmetic, transport and solvers.
#[derive(Debug, Error)]
pub enum HtError {
    #[error("invalid dimension tree: {0}")]
    InvalidTree(String),
    #[error("level {level} out of range (tree depth {depth})")]
    LevelOutOfRange { level: usize, depth: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("index out of bounds: {0}")]
    IndexOutOfBounds(String),
    #[error("rank constraint violated at node {node}: {detail}")]
    RankConstraint { node: usize, detail: String },
    #[error("operation requires an orthogonal tensor")]
    NotOrthogonal,
    #[error("dense size {size} exceeds cap {cap}")]
    TooLarge { size: u128, cap: u128 },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("send from node {from} to node {to} rejected: not a tree edge")]
    Topology { from: usize, to: usize },
    #[error("protocol error at node {node}: {msg}")]
    Protocol { node: usize, msg: String },
    #[error("worker failure: {0}")]
    Worker(String),
    #[error("solver breakdown: {0}")]
    Breakdown(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("predicted allocation of {predicted} bytes exceeds the limit of {limit} bytes")]
    ResourceLimit { predicted: u64, limit: u64 },
}

pub type Result<T> = std::result::Result<T, HtError>;
