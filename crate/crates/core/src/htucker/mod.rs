//! Hierarchical Tucker tensors and operators.
//!
//! Every node of the [`DimensionTree`] stores either a leaf frame
//! `U_μ ∈ R^{n_μ × k_μ}` or a transfer tensor `B_t ∈ R^{k_t × k_s1 × k_s2}`.
//! The root has rank 1 and its transfer is kept as a `1 × k_t1 × k_t2`
//! [`Tensor3`], which shares its memory layout with the column-major root
//! matrix `B_D`.

mod io;
mod operator;

pub use operator::{GeneralizedMatrix, HTOperator, OperatorNode};

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{HtError, Result};
use crate::kernels::{thin_svd_left, DenseTensor, Matrix, Tensor3};
use crate::tree::{DimensionTree, NodeId};

/// Default limit on `Π n_μ` for dense expansions.
pub const DEFAULT_DENSE_CAP: usize = 10_000_000;

/// Per-node ranks indexed by node id. The root entry is always 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankVector(Vec<usize>);

impl RankVector {
    pub fn uniform(tree: &DimensionTree, k: usize) -> Self {
        let mut v = vec![k; tree.num_nodes()];
        v[0] = 1;
        Self(v)
    }

    pub fn new(tree: &DimensionTree, mut ranks: Vec<usize>) -> Result<Self> {
        if ranks.len() != tree.num_nodes() {
            return Err(HtError::ShapeMismatch(format!(
                "{} ranks for a tree with {} nodes",
                ranks.len(),
                tree.num_nodes()
            )));
        }
        ranks[0] = 1;
        if let Some(t) = ranks.iter().position(|&k| k == 0) {
            return Err(HtError::RankConstraint { node: t, detail: "rank must be positive".into() });
        }
        Ok(Self(ranks))
    }

    pub fn get(&self, t: NodeId) -> usize {
        self.0[t]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Largest rank over the non-root nodes.
    pub fn max(&self) -> usize {
        self.0[1..].iter().copied().max().unwrap_or(1)
    }

    /// Lowers ranks to the structural bounds `k_μ ≤ n_μ` and `k_t ≤ k_s1·k_s2`.
    pub fn clamped(&self, tree: &DimensionTree, sizes: &[usize]) -> RankVector {
        let mut v = self.0.clone();
        for t in tree.bottom_up() {
            if t == 0 {
                continue;
            }
            v[t] = match (tree.leaf_dim(t), tree.sons(t)) {
                (Some(mu), _) => v[t].min(sizes[mu]),
                (None, Some([a, b])) => v[t].min(v[a] * v[b]),
                _ => unreachable!(),
            };
        }
        RankVector(v)
    }

    pub fn validate(&self, tree: &DimensionTree, sizes: &[usize]) -> Result<()> {
        if self.0.len() != tree.num_nodes() || sizes.len() != tree.d() {
            return Err(HtError::ShapeMismatch("rank vector or sizes do not match the tree".into()));
        }
        for t in 1..tree.num_nodes() {
            let k = self.0[t];
            let bound = match (tree.leaf_dim(t), tree.sons(t)) {
                (Some(mu), _) => sizes[mu],
                (None, Some([a, b])) => self.0[a] * self.0[b],
                _ => unreachable!(),
            };
            if k == 0 || k > bound {
                return Err(HtError::RankConstraint { node: t, detail: format!("rank {k} outside 1..={bound}") });
            }
        }
        Ok(())
    }
}

/// Data held by one tree node.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeData {
    Frame(Matrix),
    Transfer(Tensor3),
}

impl NodeData {
    pub fn rank(&self) -> usize {
        match self {
            NodeData::Frame(u) => u.cols(),
            NodeData::Transfer(b) => b.dims()[0],
        }
    }

    pub fn len(&self) -> usize {
        match self {
            NodeData::Frame(u) => u.data().len(),
            NodeData::Transfer(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame(&self) -> Option<&Matrix> {
        match self {
            NodeData::Frame(u) => Some(u),
            _ => None,
        }
    }

    pub fn transfer(&self) -> Option<&Tensor3> {
        match self {
            NodeData::Transfer(b) => Some(b),
            _ => None,
        }
    }

    pub(crate) fn is_finite(&self) -> bool {
        match self {
            NodeData::Frame(u) => u.is_finite(),
            NodeData::Transfer(b) => b.is_finite(),
        }
    }
}

/// A tensor in hierarchical Tucker format.
#[derive(Debug, Clone, PartialEq)]
pub struct HTensor {
    tree: Arc<DimensionTree>,
    sizes: Vec<usize>,
    nodes: Vec<NodeData>,
    orthogonal: bool,
}

impl HTensor {
    /// Assembles a tensor from per-node data, checking shape chaining.
    ///
    /// When `orthogonal` is claimed, debug builds verify the frames.
    pub fn from_parts(tree: Arc<DimensionTree>, nodes: Vec<NodeData>, orthogonal: bool) -> Result<Self> {
        let t = Self::from_parts_unchecked(tree, nodes, orthogonal)?;
        if let Some(node) = t.nodes.iter().position(|n| !n.is_finite()) {
            return Err(HtError::NonFinite(format!("node {node}")));
        }
        #[cfg(debug_assertions)]
        if orthogonal {
            let dev = t.orthogonality_defect();
            if dev > 1e-8 {
                return Err(HtError::Numerical(format!("orthogonal flag set but frames deviate by {dev:e}")));
            }
        }
        Ok(t)
    }

    pub(crate) fn from_parts_unchecked(tree: Arc<DimensionTree>, nodes: Vec<NodeData>, orthogonal: bool) -> Result<Self> {
        if nodes.len() != tree.num_nodes() {
            return Err(HtError::ShapeMismatch(format!(
                "{} node arrays for a tree with {} nodes",
                nodes.len(),
                tree.num_nodes()
            )));
        }
        let mut sizes = vec![0; tree.d()];
        for (t, data) in nodes.iter().enumerate() {
            match (data, tree.sons(t)) {
                (NodeData::Frame(u), None) => {
                    if u.rows() == 0 || u.cols() == 0 {
                        return Err(HtError::ShapeMismatch(format!("empty leaf frame at node {t}")));
                    }
                    sizes[tree.leaf_dim(t).unwrap()] = u.rows();
                }
                (NodeData::Transfer(b), Some([s1, s2])) => {
                    let [kt, k1, k2] = b.dims();
                    if (t == 0 && kt != 1) || kt == 0 {
                        return Err(HtError::RankConstraint { node: t, detail: format!("invalid own rank {kt}") });
                    }
                    if k1 != nodes[s1].rank() || k2 != nodes[s2].rank() {
                        return Err(HtError::ShapeMismatch(format!(
                            "transfer at node {t} has son ranks ({k1},{k2}), sons have ({},{})",
                            nodes[s1].rank(),
                            nodes[s2].rank()
                        )));
                    }
                }
                _ => return Err(HtError::ShapeMismatch(format!("node {t} has the wrong kind of data"))),
            }
        }
        Ok(Self { tree, sizes, nodes, orthogonal })
    }

    /// Random tensor with i.i.d. entries uniform on [−1, 1].
    ///
    /// Entries come from a ChaCha8 stream seeded with `seed_from_u64(seed)`,
    /// consumed node by node in id order and within a node in storage order.
    pub fn random(tree: Arc<DimensionTree>, sizes: &[usize], ranks: &RankVector, seed: u64) -> Result<Self> {
        ranks.validate(&tree, sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = move || rng.random_range(-1.0..=1.0);
        let nodes = (0..tree.num_nodes())
            .map(|t| match (tree.leaf_dim(t), tree.sons(t)) {
                (Some(mu), _) => NodeData::Frame(Matrix::from_fn(sizes[mu], ranks.get(t), |_, _| draw())),
                (None, Some([a, b])) => {
                    NodeData::Transfer(Tensor3::from_fn([ranks.get(t), ranks.get(a), ranks.get(b)], |_, _, _| draw()))
                }
                _ => unreachable!(),
            })
            .collect();
        Self::from_parts_unchecked(tree, nodes, false)
    }

    /// Elementary tensor `v_1 ∘ v_2 ∘ … ∘ v_d`.
    pub fn rank_one(tree: Arc<DimensionTree>, vectors: &[Vec<f64>]) -> Result<Self> {
        if vectors.len() != tree.d() {
            return Err(HtError::ShapeMismatch(format!("{} vectors for d = {}", vectors.len(), tree.d())));
        }
        let nodes = (0..tree.num_nodes())
            .map(|t| match tree.leaf_dim(t) {
                Some(mu) => NodeData::Frame(Matrix::column_vector(&vectors[mu])),
                None => NodeData::Transfer(Tensor3::from_data([1, 1, 1], vec![1.0]).unwrap()),
            })
            .collect();
        Self::from_parts(tree, nodes, false)
    }

    pub fn tree(&self) -> &Arc<DimensionTree> {
        &self.tree
    }

    pub fn d(&self) -> usize {
        self.tree.d()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn node(&self, t: NodeId) -> &NodeData {
        &self.nodes[t]
    }

    pub fn nodes(&self) -> &[NodeData] {
        &self.nodes
    }

    pub fn frame(&self, t: NodeId) -> Option<&Matrix> {
        self.nodes[t].frame()
    }

    /// Transfer tensor of a non-leaf node; for the root this is `1 × k_t1 × k_t2`.
    pub fn transfer(&self, t: NodeId) -> Option<&Tensor3> {
        self.nodes[t].transfer()
    }

    pub fn root_matrix(&self) -> Matrix {
        self.nodes[0].transfer().unwrap().to_root_matrix()
    }

    pub fn rank(&self, t: NodeId) -> usize {
        self.nodes[t].rank()
    }

    pub fn ranks(&self) -> RankVector {
        RankVector(self.nodes.iter().map(NodeData::rank).collect())
    }

    pub fn max_rank(&self) -> usize {
        self.ranks().max()
    }

    pub fn is_orthogonal(&self) -> bool {
        self.orthogonal
    }

    pub fn storage_size(&self) -> usize {
        self.nodes.iter().map(NodeData::len).sum()
    }

    /// Explicit frame `U_t` (`Π_{μ∈t} n_μ × k_t`) for every non-root node, and
    /// the vectorized tensor at the root.
    pub fn expanded_frames(&self, cap: usize) -> Result<Vec<Matrix>> {
        let total: u128 = self.sizes.iter().map(|&n| n as u128).product();
        if total > cap as u128 {
            return Err(HtError::TooLarge { size: total, cap: cap as u128 });
        }
        let mut frames: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        for t in self.tree.bottom_up() {
            frames[t] = Some(match (&self.nodes[t], self.tree.sons(t)) {
                (NodeData::Frame(u), _) => u.clone(),
                (NodeData::Transfer(b), Some([s1, s2])) => {
                    expand_transfer(b, frames[s1].as_ref().unwrap(), frames[s2].as_ref().unwrap())
                }
                _ => unreachable!(),
            });
        }
        Ok(frames.into_iter().map(Option::unwrap).collect())
    }

    /// Dense expansion, refused when `Π n_μ > cap`.
    pub fn to_dense(&self, cap: usize) -> Result<DenseTensor> {
        let frames = self.expanded_frames(cap)?;
        DenseTensor::new(self.sizes.clone(), frames[0].data().to_vec())
    }

    /// Largest `‖FᵀF − I‖_max` over the implicit non-root frames, where inner
    /// frames are represented by `M_{2,3}(B_t)`.
    pub fn orthogonality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for t in 1..self.nodes.len() {
            let f = match &self.nodes[t] {
                NodeData::Frame(u) => u.clone(),
                NodeData::Transfer(b) => b.unfold1().transpose(),
            };
            let g = f.t_matmul(&f);
            worst = worst.max(g.sub(&Matrix::identity(g.rows())).unwrap().max_abs());
        }
        worst
    }

    /// Hierarchical SVD of a dense tensor.
    ///
    /// Each non-root frame keeps the leading `ranks[t]` left singular vectors
    /// of `M_t(X)`, reduced to the numerical rank when that is smaller. The
    /// result is orthogonal.
    pub fn from_dense_hosvd(x: &DenseTensor, tree: Arc<DimensionTree>, ranks: &RankVector) -> Result<Self> {
        if x.d() != tree.d() {
            return Err(HtError::ShapeMismatch(format!("tensor of order {} for d = {}", x.d(), tree.d())));
        }
        let n = tree.num_nodes();
        let mut frames: Vec<Option<Matrix>> = vec![None; n];
        for t in 1..n {
            let dims: Vec<usize> = tree.dims(t).collect();
            let m = x.matricize(&dims)?;
            let (u, s) = thin_svd_left(&m)?;
            let tol = s.first().copied().unwrap_or(0.0) * (m.rows().max(m.cols()) as f64) * f64::EPSILON;
            let numerical_rank = s.iter().filter(|&&v| v > tol).count().max(1);
            frames[t] = Some(u.leading_cols(ranks.get(t).min(numerical_rank)));
        }
        let mut vec_x = Matrix::column_vector(x.data());
        let nodes = (0..n)
            .map(|t| match tree.sons(t) {
                None => NodeData::Frame(frames[t].clone().unwrap()),
                Some([s1, s2]) => {
                    let own = if t == 0 { std::mem::replace(&mut vec_x, Matrix::zeros(0, 0)) } else { frames[t].clone().unwrap() };
                    NodeData::Transfer(project_onto_sons(&own, frames[s1].as_ref().unwrap(), frames[s2].as_ref().unwrap()))
                }
            })
            .collect();
        Self::from_parts_unchecked(tree, nodes, true)
    }
}

/// Number of stored floats for the given shape without building the tensor.
pub fn storage_size_for(tree: &DimensionTree, sizes: &[usize], ranks: &RankVector) -> usize {
    (0..tree.num_nodes())
        .map(|t| match (tree.leaf_dim(t), tree.sons(t)) {
            (Some(mu), _) => sizes[mu] * ranks.get(t),
            (None, Some([a, b])) => ranks.get(t) * ranks.get(a) * ranks.get(b),
            _ => unreachable!(),
        })
        .sum()
}

/// `U_t[:, i] = Σ_{j,l} B[i,j,l] · U_s1[:, j] ⊗ U_s2[:, l]`
fn expand_transfer(b: &Tensor3, u1: &Matrix, u2: &Matrix) -> Matrix {
    let [kt, k1, k2] = b.dims();
    let (n1, n2) = (u1.rows(), u2.rows());
    let mut out = Matrix::zeros(n1 * n2, kt);
    for i in 0..kt {
        let bi = Matrix::from_fn(k2, k1, |l, j| b.get(i, j, l));
        // (n2 × n1) column-major puts r2 fastest, matching the composite order.
        let m = u2.matmul(&bi).matmul_t(u1);
        out.col_mut(i).copy_from_slice(m.data());
    }
    out
}

/// `B[i,j,l] = ⟨U_t[:, i], U_s1[:, j] ⊗ U_s2[:, l]⟩`
fn project_onto_sons(ut: &Matrix, u1: &Matrix, u2: &Matrix) -> Tensor3 {
    let (n1, n2) = (u1.rows(), u2.rows());
    let (k1, k2) = (u1.cols(), u2.cols());
    let mut b = Tensor3::zeros([ut.cols(), k1, k2]);
    for i in 0..ut.cols() {
        let x = Matrix::from_col_major(n2, n1, ut.col(i).to_vec()).unwrap();
        let m = u2.t_matmul(&x).matmul(u1);
        for j in 0..k1 {
            for l in 0..k2 {
                b.set(i, j, l, m.get(l, j));
            }
        }
    }
    b
}
