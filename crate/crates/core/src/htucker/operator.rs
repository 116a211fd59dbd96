use std::sync::Arc;

use crate::error::{HtError, Result};
use crate::kernels::{CsrMatrix, Matrix, Tensor3};
use crate::tree::{DimensionTree, NodeId};

/// A linear map `R^n → R^m` stored in whichever form is cheapest to apply.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneralizedMatrix {
    Dense(Matrix),
    Diagonal(Vec<f64>),
    Sparse(CsrMatrix),
}

impl GeneralizedMatrix {
    pub fn identity(n: usize) -> Self {
        GeneralizedMatrix::Diagonal(vec![1.0; n])
    }

    pub fn rows(&self) -> usize {
        match self {
            GeneralizedMatrix::Dense(m) => m.rows(),
            GeneralizedMatrix::Diagonal(v) => v.len(),
            GeneralizedMatrix::Sparse(s) => s.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            GeneralizedMatrix::Dense(m) => m.cols(),
            GeneralizedMatrix::Diagonal(v) => v.len(),
            GeneralizedMatrix::Sparse(s) => s.cols(),
        }
    }

    /// `self · x`, column by column.
    pub fn apply(&self, x: &Matrix) -> Matrix {
        match self {
            GeneralizedMatrix::Dense(m) => m.matmul(x),
            GeneralizedMatrix::Sparse(s) => s.apply(x),
            GeneralizedMatrix::Diagonal(v) => {
                assert_eq!(v.len(), x.rows(), "diagonal apply size mismatch");
                let mut out = x.clone();
                for c in 0..x.cols() {
                    out.col_mut(c).iter_mut().zip(v).for_each(|(y, w)| *y *= w);
                }
                out
            }
        }
    }

    pub fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        match self {
            GeneralizedMatrix::Dense(m) => m.matvec(x),
            GeneralizedMatrix::Sparse(s) => s.matvec(x),
            GeneralizedMatrix::Diagonal(v) => v.iter().zip(x).map(|(a, b)| a * b).collect(),
        }
    }

    pub fn to_dense(&self) -> Matrix {
        match self {
            GeneralizedMatrix::Dense(m) => m.clone(),
            GeneralizedMatrix::Sparse(s) => s.to_dense(),
            GeneralizedMatrix::Diagonal(v) => {
                let mut m = Matrix::zeros(v.len(), v.len());
                v.iter().enumerate().for_each(|(i, &x)| m.set(i, i, x));
                m
            }
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        match self {
            GeneralizedMatrix::Dense(m) => GeneralizedMatrix::Dense(m.scaled(alpha)),
            GeneralizedMatrix::Sparse(s) => GeneralizedMatrix::Sparse(s.scaled(alpha)),
            GeneralizedMatrix::Diagonal(v) => GeneralizedMatrix::Diagonal(v.iter().map(|x| alpha * x).collect()),
        }
    }
}

/// Node data of an [`HTOperator`].
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorNode {
    /// One matrix per rank index.
    Leaf(Vec<GeneralizedMatrix>),
    Transfer(Tensor3),
}

impl OperatorNode {
    pub fn rank(&self) -> usize {
        match self {
            OperatorNode::Leaf(w) => w.len(),
            OperatorNode::Transfer(h) => h.dims()[0],
        }
    }
}

/// A linear operator in HT format: the tensor of the operator is indexed by
/// `(row_μ, col_μ)` pairs and every leaf column is kept as a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HTOperator {
    tree: Arc<DimensionTree>,
    nodes: Vec<OperatorNode>,
    row_sizes: Vec<usize>,
    col_sizes: Vec<usize>,
}

impl HTOperator {
    pub fn from_parts(tree: Arc<DimensionTree>, nodes: Vec<OperatorNode>) -> Result<Self> {
        if nodes.len() != tree.num_nodes() {
            return Err(HtError::ShapeMismatch(format!(
                "{} operator nodes for a tree with {} nodes",
                nodes.len(),
                tree.num_nodes()
            )));
        }
        let mut row_sizes = vec![0; tree.d()];
        let mut col_sizes = vec![0; tree.d()];
        for (t, node) in nodes.iter().enumerate() {
            match (node, tree.sons(t)) {
                (OperatorNode::Leaf(ws), None) => {
                    let Some(w0) = ws.first() else {
                        return Err(HtError::RankConstraint { node: t, detail: "operator leaf without matrices".into() });
                    };
                    let shape = (w0.rows(), w0.cols());
                    if ws.iter().any(|w| (w.rows(), w.cols()) != shape) {
                        return Err(HtError::ShapeMismatch(format!("operator leaf {t} mixes matrix shapes")));
                    }
                    let mu = tree.leaf_dim(t).unwrap();
                    (row_sizes[mu], col_sizes[mu]) = shape;
                }
                (OperatorNode::Transfer(h), Some([s1, s2])) => {
                    let [kt, k1, k2] = h.dims();
                    if (t == 0 && kt != 1) || kt == 0 {
                        return Err(HtError::RankConstraint { node: t, detail: format!("invalid own rank {kt}") });
                    }
                    if k1 != nodes[s1].rank() || k2 != nodes[s2].rank() {
                        return Err(HtError::ShapeMismatch(format!("operator transfer at node {t} does not chain")));
                    }
                }
                _ => return Err(HtError::ShapeMismatch(format!("operator node {t} has the wrong kind of data"))),
            }
        }
        Ok(Self { tree, nodes, row_sizes, col_sizes })
    }

    /// Rank-1 identity on `R^{n_1} ⊗ … ⊗ R^{n_d}`.
    pub fn identity(tree: Arc<DimensionTree>, sizes: &[usize]) -> Result<Self> {
        Self::rank_one(tree, sizes.iter().map(|&n| GeneralizedMatrix::identity(n)).collect())
    }

    /// Kronecker product `W_1 ⊗ … ⊗ W_d`.
    pub fn rank_one(tree: Arc<DimensionTree>, mats: Vec<GeneralizedMatrix>) -> Result<Self> {
        if mats.len() != tree.d() {
            return Err(HtError::ShapeMismatch(format!("{} matrices for d = {}", mats.len(), tree.d())));
        }
        let nodes = (0..tree.num_nodes())
            .map(|t| match tree.leaf_dim(t) {
                Some(mu) => OperatorNode::Leaf(vec![mats[mu].clone()]),
                None => OperatorNode::Transfer(Tensor3::from_data([1, 1, 1], vec![1.0]).unwrap()),
            })
            .collect();
        Self::from_parts(tree, nodes)
    }

    pub fn tree(&self) -> &Arc<DimensionTree> {
        &self.tree
    }

    pub fn node(&self, t: NodeId) -> &OperatorNode {
        &self.nodes[t]
    }

    pub fn nodes(&self) -> &[OperatorNode] {
        &self.nodes
    }

    pub fn leaf_matrices(&self, t: NodeId) -> Option<&[GeneralizedMatrix]> {
        match &self.nodes[t] {
            OperatorNode::Leaf(w) => Some(w),
            _ => None,
        }
    }

    pub fn transfer(&self, t: NodeId) -> Option<&Tensor3> {
        match &self.nodes[t] {
            OperatorNode::Transfer(h) => Some(h),
            _ => None,
        }
    }

    pub fn rank(&self, t: NodeId) -> usize {
        self.nodes[t].rank()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.nodes.iter().map(OperatorNode::rank).collect()
    }

    pub fn max_rank(&self) -> usize {
        self.nodes[1..].iter().map(OperatorNode::rank).max().unwrap_or(1)
    }

    pub fn row_sizes(&self) -> &[usize] {
        &self.row_sizes
    }

    pub fn col_sizes(&self) -> &[usize] {
        &self.col_sizes
    }

    /// Replaces every leaf matrix of dimension `mu` by `f(W)`.
    pub fn map_leaf(&self, mu: usize, f: impl Fn(&GeneralizedMatrix) -> GeneralizedMatrix) -> Result<Self> {
        let leaf = self.tree.leaf(mu);
        let mut nodes = self.nodes.clone();
        if let OperatorNode::Leaf(ws) = &mut nodes[leaf] {
            ws.iter_mut().for_each(|w| *w = f(w));
        }
        Self::from_parts(self.tree.clone(), nodes)
    }

    /// Dense `Π m_μ × Π n_μ` matrix with last-dimension-fastest composite
    /// indices, refused when either side exceeds `cap`.
    pub fn to_dense_matrix(&self, cap: usize) -> Result<Matrix> {
        for sizes in [&self.row_sizes, &self.col_sizes] {
            let total: u128 = sizes.iter().map(|&n| n as u128).product();
            if total > cap as u128 {
                return Err(HtError::TooLarge { size: total, cap: cap as u128 });
            }
        }
        let mut mats: Vec<Vec<Matrix>> = vec![Vec::new(); self.nodes.len()];
        for t in self.tree.bottom_up() {
            mats[t] = match (&self.nodes[t], self.tree.sons(t)) {
                (OperatorNode::Leaf(ws), _) => ws.iter().map(GeneralizedMatrix::to_dense).collect(),
                (OperatorNode::Transfer(h), Some([s1, s2])) => {
                    let [kt, k1, k2] = h.dims();
                    (0..kt)
                        .map(|i| {
                            let (a, b) = (&mats[s1][0], &mats[s2][0]);
                            let mut acc = Matrix::zeros(a.rows() * b.rows(), a.cols() * b.cols());
                            for j in 0..k1 {
                                for l in 0..k2 {
                                    let c = h.get(i, j, l);
                                    if c != 0.0 {
                                        acc = acc.add(&kron(&mats[s1][j], &mats[s2][l]).scaled(c)).unwrap();
                                    }
                                }
                            }
                            acc
                        })
                        .collect()
                }
                _ => unreachable!(),
            };
        }
        Ok(mats.swap_remove(0).swap_remove(0))
    }

    /// Merges identical leaf matrices and folds the merge into the father
    /// transfer. The represented operator is unchanged.
    pub fn dedup_leaves(&self) -> Self {
        let mut nodes = self.nodes.clone();
        for mu in 0..self.tree.d() {
            let leaf = self.tree.leaf(mu);
            let OperatorNode::Leaf(ws) = &self.nodes[leaf] else { unreachable!() };
            let mut unique: Vec<GeneralizedMatrix> = Vec::new();
            let mut map = Vec::with_capacity(ws.len());
            for w in ws {
                match unique.iter().position(|u| u == w) {
                    Some(p) => map.push(p),
                    None => {
                        map.push(unique.len());
                        unique.push(w.clone());
                    }
                }
            }
            if unique.len() == ws.len() {
                continue;
            }
            let mut merge = Matrix::zeros(unique.len(), ws.len());
            map.iter().enumerate().for_each(|(j, &p)| merge.set(p, j, 1.0));
            let father = self.tree.father(leaf).unwrap();
            let [s1, _] = self.tree.sons(father).unwrap();
            if let OperatorNode::Transfer(h) = &nodes[father] {
                nodes[father] = OperatorNode::Transfer(if s1 == leaf { h.mode2(&merge) } else { h.mode3(&merge) });
            }
            nodes[leaf] = OperatorNode::Leaf(unique);
        }
        Self::from_parts(self.tree.clone(), nodes).expect("dedup keeps shapes consistent")
    }
}

/// Kronecker product with row `r1·m2 + r2` and column `c1·n2 + c2`.
fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (m2, n2) = b.shape();
    Matrix::from_fn(a.rows() * m2, a.cols() * n2, |r, c| a.get(r / m2, c / n2) * b.get(r % m2, c % n2))
}
