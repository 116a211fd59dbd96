//! Per-node kernels. Each function touches only the data of one node plus
//! the small matrices exchanged with its father or sons, so the serial
//! driver and the distributed workers share them.

use crate::htucker::{GeneralizedMatrix, NodeData};
use crate::kernels::{gemm, reduced_qr, sym_eig_desc, Matrix, Tensor3};
use crate::error::Result;

/// `r_t[i] = Σ_{j,l} B[i,j,l]·r1[j]·r2[l]`
pub(crate) fn eval_contract(b: &Tensor3, r1: &[f64], r2: &[f64]) -> Vec<f64> {
    let [kt, k1, _] = b.dims();
    let v = gemm(b.view12(), faer::MatRef::from_column_major_slice(r2, r2.len(), 1));
    let m = faer::MatRef::from_column_major_slice(v.data(), kt, k1);
    gemm(m, faer::MatRef::from_column_major_slice(r1, r1.len(), 1)).into_data()
}

/// `Φ_t = Σ B[i,j,l]·Φ1[j,j']·Φ2[l,l']·C[i',j',l']`, evaluated as two mode
/// products followed by one unfolded product.
pub(crate) fn phi_inner(b: &Tensor3, c: &Tensor3, phi1: &Matrix, phi2: &Matrix) -> Matrix {
    let t = b.mode2(&phi1.transpose()).mode3(&phi2.transpose());
    gemm(t.view1(), c.view1().transpose())
}

/// QR of a leaf frame; returns the new frame and the factor sent upward.
pub(crate) fn orth_leaf(u: &Matrix) -> (Matrix, Matrix) {
    reduced_qr(u)
}

/// Absorbs the sons' R factors into `B` and, for non-root nodes,
/// orthonormalizes `M_{2,3}(B)`. Returns the new tensor and the R factor for
/// the father (`None` at the root).
pub(crate) fn orth_transfer(b: &Tensor3, r1: &Matrix, r2: &Matrix, is_root: bool) -> (Tensor3, Option<Matrix>) {
    let b = b.mode2(r1).mode3(r2);
    if is_root {
        return (b, None);
    }
    let [_, p1, p2] = b.dims();
    let (q, r) = reduced_qr(&b.unfold1().transpose());
    (Tensor3::from_unfold1(&q.transpose(), p1, p2).unwrap(), Some(r))
}

/// Gram matrices of the two sons from the node's own `B̂_t`.
pub(crate) fn bhat_sons(b: &Tensor3, bhat: &Matrix) -> (Matrix, Matrix) {
    let t = b.mode1(bhat);
    let s1 = b.unfold2().matmul_t(&t.unfold2());
    let s2 = gemm(b.view12().transpose(), t.view12());
    (symmetrize(s1), symmetrize(s2))
}

fn symmetrize(mut m: Matrix) -> Matrix {
    let n = m.rows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m.get(i, j) + m.get(j, i));
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    m
}

/// Eigen-decomposes `B̂_t` and returns `Q_t` restricted to the kept columns.
pub(crate) fn truncation_basis(bhat: &Matrix, choose: impl FnOnce(&[f64]) -> usize) -> Result<(Matrix, Vec<f64>)> {
    let (lambda, q) = sym_eig_desc(bhat)?;
    let r = choose(&lambda).clamp(1, lambda.len());
    Ok((q.leading_cols(r), lambda))
}

pub(crate) fn truncate_leaf(u: &Matrix, q: &Matrix) -> Matrix {
    u.matmul(q)
}

/// `B ← B ×1 Q_tᵀ ×2 Q1ᵀ ×3 Q2ᵀ`; the root skips mode 1.
pub(crate) fn truncate_transfer(b: &Tensor3, qt: Option<&Matrix>, q1: &Matrix, q2: &Matrix) -> Tensor3 {
    let b = match qt {
        Some(q) => b.mode1(&q.transpose()),
        None => b.clone(),
    };
    b.mode2(&q1.transpose()).mode3(&q2.transpose())
}

/// Block-diagonal combination of two transfers. At the root both blocks
/// share the single mode-1 index.
pub(crate) fn add_transfer(a: &Tensor3, c: &Tensor3, is_root: bool) -> Tensor3 {
    let [a0, a1, a2] = a.dims();
    let [c0, c1, c2] = c.dims();
    let (off0, n0) = if is_root { (0, 1) } else { (a0, a0 + c0) };
    let mut out = Tensor3::zeros([n0, a1 + c1, a2 + c2]);
    for l in 0..a2 {
        for j in 0..a1 {
            for i in 0..a0 {
                out.set(i, j, l, a.get(i, j, l));
            }
        }
    }
    for l in 0..c2 {
        for j in 0..c1 {
            for i in 0..c0 {
                out.set(off0 + i, a1 + j, a2 + l, c.get(i, j, l));
            }
        }
    }
    out
}

pub(crate) fn add_node(a: &NodeData, c: &NodeData, is_root: bool) -> Result<NodeData> {
    Ok(match (a, c) {
        (NodeData::Frame(u), NodeData::Frame(v)) => NodeData::Frame(Matrix::hcat(&[u, v])?),
        (NodeData::Transfer(b), NodeData::Transfer(e)) => NodeData::Transfer(add_transfer(b, e, is_root)),
        _ => unreachable!("node kinds agree on a shared tree"),
    })
}

/// Leaf of `L·A`: column `p·k + l` is `W_p·U[:, l]`.
pub(crate) fn apply_leaf(ws: &[GeneralizedMatrix], u: &Matrix) -> Matrix {
    let k = u.cols();
    let mut out = Matrix::zeros(ws[0].rows(), ws.len() * k);
    for (p, w) in ws.iter().enumerate() {
        let v = w.apply(u);
        out.data_mut()[p * k * v.rows()..(p + 1) * k * v.rows()].copy_from_slice(v.data());
    }
    out
}

/// Kronecker transfer `F[(p,i),(q,j),(r,l)] = H[p,q,r]·B[i,j,l]` with composite
/// index `p·k + i`.
pub(crate) fn apply_transfer(h: &Tensor3, b: &Tensor3) -> Tensor3 {
    let [h0, h1, h2] = h.dims();
    let [k0, k1, k2] = b.dims();
    let (n0, n1) = (h0 * k0, h1 * k1);
    let mut out = Tensor3::zeros([n0, n1, h2 * k2]);
    let dst = out.data_mut();
    for r in 0..h2 {
        for l in 0..k2 {
            let c = r * k2 + l;
            for q in 0..h1 {
                for j in 0..k1 {
                    let col = n0 * ((q * k1 + j) + n1 * c);
                    let src = &b.data()[k0 * (j + k1 * l)..k0 * (j + k1 * l + 1)];
                    for p in 0..h0 {
                        let s = h.get(p, q, r);
                        if s == 0.0 {
                            continue;
                        }
                        dst[col + p * k0..col + (p + 1) * k0].iter_mut().zip(src).for_each(|(y, x)| *y = s * x);
                    }
                }
            }
        }
    }
    out
}
