//! Dense reference computations written directly from the HT definitions
//! with explicit index loops. Composite indices are last-dimension-fastest.

use std::ops::Range;

use htensor::kernels::thin_svd_left;
use htensor::{DimensionTree, HTOperator, HTensor, Matrix, NodeId};

/// All multi-indices in linear order.
pub fn multi_indices(sizes: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = sizes.iter().product();
    (0..total)
        .map(|mut lin| {
            let mut idx = vec![0; sizes.len()];
            for mu in (0..sizes.len()).rev() {
                idx[mu] = lin % sizes[mu];
                lin /= sizes[mu];
            }
            idx
        })
        .collect()
}

/// Explicit frame of every node; the root entry is the vectorized tensor.
pub fn frames(a: &HTensor) -> Vec<Matrix> {
    let tree = a.tree();
    let mut out = vec![Matrix::zeros(0, 0); tree.num_nodes()];
    for t in (0..tree.num_nodes()).rev() {
        let f = match tree.sons(t) {
            None => a.frame(t).unwrap().clone(),
            Some([s1, s2]) => {
                let b = a.transfer(t).unwrap();
                let (u1, u2) = (&out[s1], &out[s2]);
                let [kt, k1, k2] = b.dims();
                let (n1, n2) = (u1.rows(), u2.rows());
                let mut f = Matrix::zeros(n1 * n2, kt);
                for i in 0..kt {
                    for j in 0..k1 {
                        for l in 0..k2 {
                            let w = b.get(i, j, l);
                            for r1 in 0..n1 {
                                for r2 in 0..n2 {
                                    let r = r1 * n2 + r2;
                                    f.set(r, i, f.get(r, i) + w * u1.get(r1, j) * u2.get(r2, l));
                                }
                            }
                        }
                    }
                }
                f
            }
        };
        out[t] = f;
    }
    out
}

pub fn dense(a: &HTensor) -> Vec<f64> {
    frames(a).swap_remove(0).into_data()
}

/// `M_t(x)` for the contiguous dimension range `dims`.
pub fn matricize(x: &[f64], sizes: &[usize], dims: Range<usize>) -> Matrix {
    let rows: usize = sizes[dims.clone()].iter().product();
    let mut m = Matrix::zeros(rows, x.len() / rows);
    for (lin, idx) in multi_indices(sizes).iter().enumerate() {
        let (mut r, mut c) = (0, 0);
        for (mu, (&i, &n)) in idx.iter().zip(sizes).enumerate() {
            if dims.contains(&mu) {
                r = r * n + i;
            } else {
                c = c * n + i;
            }
        }
        m.set(r, c, x[lin]);
    }
    m
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    Matrix::from_fn(a.rows() * b.rows(), a.cols() * b.cols(), |i, j| {
        a.get(i / b.rows(), j / b.cols()) * b.get(i % b.rows(), j % b.cols())
    })
}

/// The operator as one dense matrix.
pub fn operator_matrix(op: &HTOperator) -> Matrix {
    let tree = op.tree();
    let mut mats: Vec<Vec<Matrix>> = vec![Vec::new(); tree.num_nodes()];
    for t in (0..tree.num_nodes()).rev() {
        let m = match tree.sons(t) {
            None => op.leaf_matrices(t).unwrap().iter().map(|g| g.to_dense()).collect(),
            Some([s1, s2]) => {
                let h = op.transfer(t).unwrap();
                let [kt, k1, k2] = h.dims();
                let (a0, b0) = (&mats[s1][0], &mats[s2][0]);
                let mut out = vec![Matrix::zeros(a0.rows() * b0.rows(), a0.cols() * b0.cols()); kt];
                for j in 0..k1 {
                    for l in 0..k2 {
                        let k = kron(&mats[s1][j], &mats[s2][l]);
                        for (i, o) in out.iter_mut().enumerate() {
                            let w = h.get(i, j, l);
                            if w != 0.0 {
                                *o = o.add(&k.scaled(w)).unwrap();
                            }
                        }
                    }
                }
                out
            }
        };
        mats[t] = m;
    }
    mats.swap_remove(0).swap_remove(0)
}

/// `(O_1 ⊗ O_2) v` with `v` laid out as an `n1 × n2` row-major block.
fn kron_apply(o1: &Matrix, o2: &Matrix, v: &[f64]) -> Vec<f64> {
    let (n1, n2) = (o1.rows(), o2.rows());
    let x = Matrix::from_fn(n1, n2, |i, j| v[i * n2 + j]);
    let y = o1.matmul(&x).matmul_t(o2);
    (0..n1 * n2).map(|r| y.get(r / n2, r % n2)).collect()
}

/// Hierarchical SVD truncation of a dense tensor: every non-root node keeps
/// the leading `rank(t)` left singular vectors of `M_t(x)`, and the node
/// projections are nested from the leaves upward.
pub fn hsvd(x: &[f64], sizes: &[usize], tree: &DimensionTree, rank: impl Fn(NodeId) -> usize) -> Vec<f64> {
    let n = tree.num_nodes();
    let mut proj: Vec<Matrix> = vec![Matrix::zeros(0, 0); n];
    for t in (1..n).rev() {
        let (u, _) = thin_svd_left(&matricize(x, sizes, tree.dims(t))).unwrap();
        let w = u.leading_cols(rank(t).min(u.cols()));
        let pi = w.matmul_t(&w);
        proj[t] = match tree.sons(t) {
            None => pi,
            Some([s1, s2]) => {
                let mut o = Matrix::zeros(pi.rows(), pi.cols());
                for c in 0..pi.cols() {
                    o.col_mut(c).copy_from_slice(&kron_apply(&proj[s1], &proj[s2], pi.col(c)));
                }
                o
            }
        };
    }
    let [s1, s2] = tree.sons(0).unwrap();
    kron_apply(&proj[s1], &proj[s2], x)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `‖x − y‖ / ‖y‖`.
pub fn rel(x: &[f64], y: &[f64]) -> f64 {
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(y).max(f64::MIN_POSITIVE)
}
