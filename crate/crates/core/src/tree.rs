//! Balanced binary dimension trees.
//!
//! Dimensions are 0-based in the API: the root covers `0..d`. A node covering
//! the 1-based interval `[μ..ν]` with `ν > μ` is split after `⌊(μ+ν−1)/2⌋`,
//! so the left son never has more dimensions than the right one. Node ids are
//! assigned breadth-first, left to right within a level, root = 0. Because
//! sons always receive larger ids than their father, descending id order is a
//! valid bottom-up schedule.

use std::collections::VecDeque;
use std::ops::Range;

use crate::error::{HtError, Result};

/// Index of a node in a [`DimensionTree`]; the root is 0.
pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub dims: Range<usize>,
    pub father: Option<NodeId>,
    pub sons: Option<[NodeId; 2]>,
    pub level: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimensionTree {
    d: usize,
    nodes: Vec<TreeNode>,
    leaf_of_dim: Vec<NodeId>,
    levels: Vec<Vec<NodeId>>,
}

impl DimensionTree {
    /// Builds the balanced tree over `d ≥ 2` dimensions.
    pub fn balanced(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(HtError::InvalidTree(format!("dimension must be at least 2, got {d}")));
        }
        let mut nodes: Vec<TreeNode> = Vec::with_capacity(2 * d - 1);
        let mut queue: VecDeque<(Range<usize>, Option<NodeId>, usize)> = VecDeque::new();
        queue.push_back((0..d, None, 0));
        while let Some((dims, father, level)) = queue.pop_front() {
            let id = nodes.len();
            if let Some(f) = father {
                let sons = nodes[f].sons.get_or_insert([usize::MAX; 2]);
                if sons[0] == usize::MAX {
                    sons[0] = id;
                } else {
                    sons[1] = id;
                }
            }
            if dims.len() > 1 {
                // 1-based μ = start+1, ν = end; split m = ⌊(μ+ν−1)/2⌋ is also the
                // 0-based exclusive end of the left son.
                let split = (dims.start + dims.end) / 2;
                queue.push_back((dims.start..split, Some(id), level + 1));
                queue.push_back((split..dims.end, Some(id), level + 1));
            }
            nodes.push(TreeNode { dims, father, sons: None, level });
        }
        let mut leaf_of_dim = vec![0; d];
        let depth = nodes.iter().map(|n| n.level).max().unwrap_or(0);
        let mut levels = vec![Vec::new(); depth + 1];
        for (id, node) in nodes.iter().enumerate() {
            if node.sons.is_none() {
                leaf_of_dim[node.dims.start] = id;
            }
            levels[node.level].push(id);
        }
        Ok(Self { d, nodes, leaf_of_dim, levels })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn dims(&self, id: NodeId) -> Range<usize> {
        self.nodes[id].dims.clone()
    }

    pub fn father(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id].father
    }

    pub fn sons(&self, id: NodeId) -> Option<[NodeId; 2]> {
        self.nodes[id].sons
    }

    pub fn level(&self, id: NodeId) -> usize {
        self.nodes[id].level
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.nodes[id].sons.is_none()
    }

    pub fn is_root(&self, id: NodeId) -> bool {
        id == 0
    }

    /// Non-root, non-leaf node.
    pub fn is_inner(&self, id: NodeId) -> bool {
        id != 0 && !self.is_leaf(id)
    }

    /// Number of levels below the root, `⌈log₂ d⌉`.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn nodes_at_level(&self, level: usize) -> Result<&[NodeId]> {
        self.levels
            .get(level)
            .map(|v| v.as_slice())
            .ok_or(HtError::LevelOutOfRange { level, depth: self.depth() })
    }

    /// Leaf node holding dimension `mu` (0-based).
    pub fn leaf(&self, mu: usize) -> NodeId {
        self.leaf_of_dim[mu]
    }

    /// Dimension held by `id` if it is a leaf.
    pub fn leaf_dim(&self, id: NodeId) -> Option<usize> {
        self.is_leaf(id).then(|| self.nodes[id].dims.start)
    }

    /// Leaves in dimension order.
    pub fn leaves(&self) -> &[NodeId] {
        &self.leaf_of_dim
    }

    pub fn inner_nodes(&self) -> Vec<NodeId> {
        (0..self.nodes.len()).filter(|&t| self.is_inner(t)).collect()
    }

    /// Father/son pairs in id order of the son.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        (1..self.nodes.len()).map(|s| (self.nodes[s].father.unwrap(), s)).collect()
    }

    pub fn is_edge(&self, a: NodeId, b: NodeId) -> bool {
        (a < self.nodes.len() && self.nodes[a].father == Some(b))
            || (b < self.nodes.len() && self.nodes[b].father == Some(a))
    }

    /// Ids from leaves to root (every son precedes its father).
    pub fn bottom_up(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).rev()
    }
}
