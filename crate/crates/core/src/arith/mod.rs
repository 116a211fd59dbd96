//! Serial HT arithmetic.
//!
//! Tree sweeps run in descending node id order for upward passes and
//! ascending order for downward passes; both respect the level structure.

pub(crate) mod local;

use crate::error::{HtError, Result};
use crate::htucker::{HTOperator, HTensor, NodeData, OperatorNode, RankVector};
use crate::kernels::{Matrix, Tensor3};

/// Target ranks for fixed-rank truncation.
#[derive(Debug, Clone, PartialEq)]
pub enum RankTarget {
    Uniform(usize),
    PerNode(RankVector),
}

/// How [`truncate`] picks the kept rank at each node.
#[derive(Debug, Clone, PartialEq)]
pub enum TruncationControl {
    FixedRank(RankTarget),
    /// Keeps `‖A − T(A)‖_F ≤ eps` by allowing each of the `2d−2` non-root
    /// nodes a squared tail of `eps²/(2d−2)`, then applies the optional cap.
    Accuracy { eps: f64, max_rank: Option<usize> },
}

impl TruncationControl {
    pub fn uniform(k: usize) -> Self {
        TruncationControl::FixedRank(RankTarget::Uniform(k))
    }

    pub fn accuracy(eps: f64, max_rank: Option<usize>) -> Self {
        TruncationControl::Accuracy { eps, max_rank }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TruncationControl::FixedRank(RankTarget::Uniform(0)) => Err(HtError::Config("uniform target rank must be positive".into())),
            TruncationControl::Accuracy { eps, .. } if !(eps.is_finite() && *eps > 0.0) => {
                Err(HtError::Config(format!("accuracy must be positive, got {eps}")))
            }
            TruncationControl::Accuracy { max_rank: Some(0), .. } => Err(HtError::Config("rank cap must be positive".into())),
            _ => Ok(()),
        }
    }

    /// Kept rank at node `t` given the descending eigenvalues of `B̂_t`.
    pub fn choose_rank(&self, t: usize, d: usize, lambda: &[f64]) -> usize {
        let k = lambda.len();
        let r = match self {
            TruncationControl::FixedRank(RankTarget::Uniform(r)) => *r,
            TruncationControl::FixedRank(RankTarget::PerNode(rv)) => rv.get(t),
            TruncationControl::Accuracy { eps, max_rank } => {
                let budget = eps * eps / (2 * d - 2) as f64;
                // Suffix sums accumulated from the small end stay accurate.
                let mut tails = vec![0.0; k + 1];
                for i in (0..k).rev() {
                    tails[i] = tails[i + 1] + lambda[i];
                }
                let r = (1..=k).find(|&r| tails[r] <= budget).unwrap_or(k);
                max_rank.map_or(r, |m| r.min(m))
            }
        };
        r.clamp(1, k.max(1))
    }
}

fn check_compatible(a: &HTensor, c: &HTensor) -> Result<()> {
    if a.d() != c.d() || a.sizes() != c.sizes() {
        return Err(HtError::ShapeMismatch(format!("tensors of sizes {:?} and {:?}", a.sizes(), c.sizes())));
    }
    Ok(())
}

/// Single entry via the upward row contraction.
pub fn evaluate_entry(a: &HTensor, idx: &[usize]) -> Result<f64> {
    if idx.len() != a.d() || idx.iter().zip(a.sizes()).any(|(&i, &n)| i >= n) {
        return Err(HtError::IndexOutOfBounds(format!("index {idx:?} for sizes {:?}", a.sizes())));
    }
    let tree = a.tree();
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); tree.num_nodes()];
    for t in tree.bottom_up() {
        rows[t] = match (a.node(t), tree.sons(t)) {
            (NodeData::Frame(u), _) => u.row(idx[tree.leaf_dim(t).unwrap()]),
            (NodeData::Transfer(b), Some([s1, s2])) => local::eval_contract(b, &rows[s1], &rows[s2]),
            _ => unreachable!(),
        };
    }
    Ok(rows[0][0])
}

/// Contracts every dimension except `keep` against a weight vector and
/// returns the remaining fibre. `weights` lists the vectors for the other
/// dimensions in increasing order; unit vectors give a single fibre.
pub fn partial_contract(a: &HTensor, keep: usize, weights: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = a.d();
    if keep >= d || weights.len() + 1 != d {
        return Err(HtError::ShapeMismatch(format!("{} weight vectors for d = {d} with kept dimension {keep}", weights.len())));
    }
    let weight = |mu: usize| &weights[if mu < keep { mu } else { mu - 1 }];
    for mu in (0..d).filter(|&mu| mu != keep) {
        if weight(mu).len() != a.sizes()[mu] {
            return Err(HtError::ShapeMismatch(format!("weight of length {} for dimension {mu} of size {}", weight(mu).len(), a.sizes()[mu])));
        }
    }
    enum Part {
        Row(Vec<f64>),
        Fibre(Matrix),
    }
    // Σ_j B[i,j,l] r[j] (or over l when `over_third`), as a k_t × k_other matrix.
    let fold = |b: &Tensor3, r: &[f64], over_third: bool| {
        let [kt, k1, k2] = b.dims();
        if over_third {
            Matrix::from_fn(kt, k1, |i, j| (0..k2).map(|l| b.get(i, j, l) * r[l]).sum())
        } else {
            Matrix::from_fn(kt, k2, |i, l| (0..k1).map(|j| b.get(i, j, l) * r[j]).sum())
        }
    };
    let tree = a.tree();
    let mut parts: Vec<Option<Part>> = (0..tree.num_nodes()).map(|_| None).collect();
    for t in tree.bottom_up() {
        let part = match (a.node(t), tree.sons(t)) {
            (NodeData::Frame(u), _) => {
                let mu = tree.leaf_dim(t).unwrap();
                if mu == keep {
                    Part::Fibre(u.clone())
                } else {
                    Part::Row(u.t_matmul(&Matrix::column_vector(weight(mu))).into_data())
                }
            }
            (NodeData::Transfer(b), Some([s1, s2])) => match (parts[s1].take().unwrap(), parts[s2].take().unwrap()) {
                (Part::Row(r1), Part::Row(r2)) => Part::Row(local::eval_contract(b, &r1, &r2)),
                (Part::Row(r1), Part::Fibre(m2)) => Part::Fibre(m2.matmul_t(&fold(b, &r1, false))),
                (Part::Fibre(m1), Part::Row(r2)) => Part::Fibre(m1.matmul_t(&fold(b, &r2, true))),
                (Part::Fibre(_), Part::Fibre(_)) => unreachable!("one leaf is kept"),
            },
            _ => unreachable!(),
        };
        parts[t] = Some(part);
    }
    match parts[0].take().unwrap() {
        Part::Fibre(m) => Ok(m.into_data()),
        Part::Row(_) => unreachable!(),
    }
}

/// All `Φ_t = U_tᵀ V_t`; the root entry is the 1×1 inner product.
pub fn compute_phi(a: &HTensor, c: &HTensor) -> Result<Vec<Matrix>> {
    check_compatible(a, c)?;
    let tree = a.tree();
    let mut phi: Vec<Matrix> = vec![Matrix::zeros(0, 0); tree.num_nodes()];
    for t in tree.bottom_up() {
        phi[t] = match (a.node(t), c.node(t), tree.sons(t)) {
            (NodeData::Frame(u), NodeData::Frame(v), _) => u.t_matmul(v),
            (NodeData::Transfer(b), NodeData::Transfer(e), Some([s1, s2])) => local::phi_inner(b, e, &phi[s1], &phi[s2]),
            _ => unreachable!(),
        };
    }
    Ok(phi)
}

pub fn inner_product(a: &HTensor, c: &HTensor) -> Result<f64> {
    Ok(compute_phi(a, c)?[0].get(0, 0))
}

pub fn norm(a: &HTensor) -> f64 {
    inner_product(a, a).expect("a tensor is compatible with itself").max(0.0).sqrt()
}

pub fn orthogonalize(a: &HTensor) -> HTensor {
    let tree = a.tree().clone();
    let n = tree.num_nodes();
    let mut nodes: Vec<Option<NodeData>> = vec![None; n];
    let mut rfac: Vec<Matrix> = vec![Matrix::zeros(0, 0); n];
    for t in tree.bottom_up() {
        match (a.node(t), tree.sons(t)) {
            (NodeData::Frame(u), _) => {
                let (q, r) = local::orth_leaf(u);
                nodes[t] = Some(NodeData::Frame(q));
                rfac[t] = r;
            }
            (NodeData::Transfer(b), Some([s1, s2])) => {
                let (b, r) = local::orth_transfer(b, &rfac[s1], &rfac[s2], t == 0);
                nodes[t] = Some(NodeData::Transfer(b));
                if let Some(r) = r {
                    rfac[t] = r;
                }
            }
            _ => unreachable!(),
        }
    }
    HTensor::from_parts_unchecked(tree, nodes.into_iter().map(Option::unwrap).collect(), true).unwrap()
}

/// `B̂_t = V_tᵀ V_t` for every node, computed root downward. Requires an
/// orthogonal tensor.
pub fn compute_bhat(a: &HTensor) -> Result<Vec<Matrix>> {
    if !a.is_orthogonal() {
        return Err(HtError::NotOrthogonal);
    }
    let tree = a.tree();
    let mut bhat: Vec<Matrix> = vec![Matrix::zeros(0, 0); tree.num_nodes()];
    bhat[0] = Matrix::identity(1);
    for t in 0..tree.num_nodes() {
        if let (Some([s1, s2]), NodeData::Transfer(b)) = (tree.sons(t), a.node(t)) {
            let (g1, g2) = local::bhat_sons(b, &bhat[t]);
            bhat[s1] = g1;
            bhat[s2] = g2;
        }
    }
    Ok(bhat)
}

/// Truncation via Gram eigendecompositions. Non-orthogonal inputs are
/// orthogonalized first; the result is not flagged orthogonal.
pub fn truncate(a: &HTensor, ctl: &TruncationControl) -> Result<HTensor> {
    ctl.validate()?;
    let orth;
    let a = if a.is_orthogonal() {
        a
    } else {
        orth = orthogonalize(a);
        &orth
    };
    let tree = a.tree().clone();
    let bhat = compute_bhat(a)?;
    let n = tree.num_nodes();
    let mut q: Vec<Matrix> = vec![Matrix::zeros(0, 0); n];
    for t in 1..n {
        q[t] = local::truncation_basis(&bhat[t], |lambda| ctl.choose_rank(t, tree.d(), lambda))?.0;
    }
    let nodes = (0..n)
        .map(|t| match (a.node(t), tree.sons(t)) {
            (NodeData::Frame(u), _) => NodeData::Frame(local::truncate_leaf(u, &q[t])),
            (NodeData::Transfer(b), Some([s1, s2])) => {
                NodeData::Transfer(local::truncate_transfer(b, (t != 0).then(|| &q[t]), &q[s1], &q[s2]))
            }
            _ => unreachable!(),
        })
        .collect();
    let out = HTensor::from_parts_unchecked(tree, nodes, false)?;
    if !out.nodes().iter().all(NodeData::is_finite) {
        return Err(HtError::NonFinite("truncated tensor".into()));
    }
    Ok(out)
}

/// Exact sum; ranks add node-wise and no floating-point work is done.
pub fn add(a: &HTensor, c: &HTensor) -> Result<HTensor> {
    check_compatible(a, c)?;
    let nodes = (0..a.tree().num_nodes())
        .map(|t| local::add_node(a.node(t), c.node(t), t == 0))
        .collect::<Result<Vec<_>>>()?;
    HTensor::from_parts_unchecked(a.tree().clone(), nodes, false)
}

pub fn scale(a: &HTensor, alpha: f64) -> HTensor {
    let mut nodes = a.nodes().to_vec();
    if let NodeData::Transfer(b) = &nodes[0] {
        nodes[0] = NodeData::Transfer(b.scaled(alpha));
    }
    HTensor::from_parts_unchecked(a.tree().clone(), nodes, a.is_orthogonal()).unwrap()
}

/// `a − c` without truncation.
pub fn sub(a: &HTensor, c: &HTensor) -> Result<HTensor> {
    add(a, &scale(c, -1.0))
}

/// `L·A` with ranks multiplying node-wise.
pub fn apply_operator(op: &HTOperator, a: &HTensor) -> Result<HTensor> {
    if op.tree().d() != a.d() || op.col_sizes() != a.sizes() {
        return Err(HtError::ShapeMismatch(format!(
            "operator with column sizes {:?} applied to tensor of sizes {:?}",
            op.col_sizes(),
            a.sizes()
        )));
    }
    let nodes = (0..a.tree().num_nodes())
        .map(|t| apply_node(op.node(t), a.node(t)))
        .collect();
    HTensor::from_parts_unchecked(a.tree().clone(), nodes, false)
}

pub(crate) fn apply_node(op: &OperatorNode, a: &NodeData) -> NodeData {
    match (op, a) {
        (OperatorNode::Leaf(ws), NodeData::Frame(u)) => NodeData::Frame(local::apply_leaf(ws, u)),
        (OperatorNode::Transfer(h), NodeData::Transfer(b)) => NodeData::Transfer(local::apply_transfer(h, b)),
        _ => unreachable!("node kinds agree on a shared tree"),
    }
}

/// Replaces the leaf frame of dimension `mu` by `m·U_μ`.
pub fn map_leaf(a: &HTensor, mu: usize, m: &crate::htucker::GeneralizedMatrix) -> Result<HTensor> {
    let leaf = a.tree().leaf(mu);
    let u = a.frame(leaf).unwrap();
    if m.cols() != u.rows() {
        return Err(HtError::ShapeMismatch(format!("{}x{} map on a leaf of size {}", m.rows(), m.cols(), u.rows())));
    }
    let mut nodes = a.nodes().to_vec();
    nodes[leaf] = NodeData::Frame(m.apply(u));
    HTensor::from_parts_unchecked(a.tree().clone(), nodes, false)
}
