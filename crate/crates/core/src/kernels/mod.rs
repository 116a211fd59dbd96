//! Dense numerical primitives.
//!
//! Matrices are column-major. Factorizations and products go through `faer`
//! with sequential execution so identical inputs give identical bits.

mod dense;
mod sparse;
mod tensor3;

pub use dense::DenseTensor;
pub use sparse::CsrMatrix;
pub use tensor3::{mode_multiply, Tensor3};

use faer::linalg::matmul::matmul;
use faer::{Accum, MatMut, MatRef, Par, Side};

use crate::error::{HtError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i + n * i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(HtError::ShapeMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Row-major literal, convenient in tests.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        Self::from_fn(r, c, |i, j| rows[i][j])
    }

    pub fn column_vector(v: &[f64]) -> Self {
        Self { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i + self.rows * j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i + self.rows * j] = v;
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = vec![0.0; self.data.len()];
        transpose_into(&self.data, self.rows, self.cols, &mut data);
        Matrix { rows: self.cols, cols: self.rows, data }
    }

    /// First `k` columns.
    pub fn leading_cols(&self, k: usize) -> Matrix {
        Self { rows: self.rows, cols: k, data: self.data[..k * self.rows].to_vec() }
    }

    pub fn hcat(parts: &[&Matrix]) -> Result<Matrix> {
        let rows = parts.first().map_or(0, |m| m.rows);
        if parts.iter().any(|m| m.rows != rows) {
            return Err(HtError::ShapeMismatch("hcat with differing row counts".into()));
        }
        let mut data = Vec::with_capacity(parts.iter().map(|m| m.data.len()).sum());
        for m in parts {
            data.extend_from_slice(&m.data);
        }
        Ok(Matrix { rows, cols: data.len() / rows.max(1), data })
    }

    pub fn scaled(&self, alpha: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| alpha * x).collect() }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip(other, |a, b| a - b)
    }

    fn zip(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(HtError::ShapeMismatch(format!("{:?} vs {:?}", self.shape(), other.shape())));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// `self · other`
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        gemm(self.view(), other.view())
    }

    /// `selfᵀ · other`
    pub fn t_matmul(&self, other: &Matrix) -> Matrix {
        gemm(self.view().transpose(), other.view())
    }

    /// `self · otherᵀ`
    pub fn matmul_t(&self, other: &Matrix) -> Matrix {
        gemm(self.view(), other.view().transpose())
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec length mismatch");
        let mut y = vec![0.0; self.rows];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                for (yi, a) in y.iter_mut().zip(self.col(j)) {
                    *yi += a * xj;
                }
            }
        }
        y
    }

    pub(crate) fn view(&self) -> MatRef<'_, f64> {
        MatRef::from_column_major_slice(&self.data, self.rows, self.cols)
    }

    pub(crate) fn view_mut(&mut self) -> MatMut<'_, f64> {
        MatMut::from_column_major_slice_mut(&mut self.data, self.rows, self.cols)
    }

    pub(crate) fn from_faer(m: MatRef<'_, f64>) -> Matrix {
        Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

/// Writes the transpose of the column-major `rows × cols` block `src` into
/// `dst`, tile by tile to keep both sides in cache.
pub(crate) fn transpose_into(src: &[f64], rows: usize, cols: usize, dst: &mut [f64]) {
    const TILE: usize = 32;
    for j0 in (0..cols).step_by(TILE) {
        for i0 in (0..rows).step_by(TILE) {
            for j in j0..(j0 + TILE).min(cols) {
                for i in i0..(i0 + TILE).min(rows) {
                    dst[j + cols * i] = src[i + rows * j];
                }
            }
        }
    }
}

pub(crate) fn gemm(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Matrix {
    let mut out = Matrix::zeros(a.nrows(), b.ncols());
    gemm_into(out.view_mut(), a, b);
    out
}

pub(crate) fn gemm_into(dst: MatMut<'_, f64>, a: MatRef<'_, f64>, b: MatRef<'_, f64>) {
    if a.ncols() == 0 {
        let mut dst = dst;
        dst.fill(0.0);
        return;
    }
    matmul(dst, Accum::Replace, a, b, 1.0, Par::Seq);
}

/// Householder QR `M = Q·R` with `min(rows, cols)` orthonormal columns in `Q`
/// and a non-negative diagonal in `R`.
pub fn reduced_qr(m: &Matrix) -> (Matrix, Matrix) {
    let p = m.rows.min(m.cols);
    let qr = m.view().qr();
    let mut q = Matrix::from_faer(qr.compute_thin_Q().as_ref());
    let thin_r = qr.thin_R();
    let mut r = Matrix::from_fn(p, m.cols, |i, j| if i <= j { thin_r[(i, j)] } else { 0.0 });
    for i in 0..p {
        if r.get(i, i) < 0.0 {
            for j in i..m.cols {
                r.set(i, j, -r.get(i, j));
            }
            for x in q.col_mut(i) {
                *x = -*x;
            }
        }
    }
    (q, r)
}

/// Symmetric eigendecomposition with eigenvalues in descending order.
///
/// Returns `(λ, Q)` with `S·Q = Q·diag(λ)`. Negative eigenvalues are clamped
/// to zero because every caller feeds Gram matrices.
pub fn sym_eig_desc(s: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = s.rows;
    if s.cols != n {
        return Err(HtError::ShapeMismatch(format!("eigendecomposition of a {}x{} matrix", n, s.cols)));
    }
    if !s.is_finite() {
        return Err(HtError::NonFinite("symmetric eigenproblem input".into()));
    }
    let scale = s.max_abs().max(f64::MIN_POSITIVE);
    for j in 0..n {
        for i in j + 1..n {
            if (s.get(i, j) - s.get(j, i)).abs() > 1e-12 * scale {
                return Err(HtError::Numerical(format!(
                    "matrix not symmetric: entry ({i},{j}) differs by {:e}",
                    (s.get(i, j) - s.get(j, i)).abs()
                )));
            }
        }
    }
    let evd = s
        .view()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| HtError::Numerical(format!("eigensolver failed: {e:?}")))?;
    let vals = evd.S();
    let vecs = evd.U();
    let lambda: Vec<f64> = (0..n).rev().map(|i| vals[i].max(0.0)).collect();
    let q = Matrix::from_fn(n, n, |i, j| vecs[(i, n - 1 - j)]);
    Ok((lambda, q))
}

/// Thin SVD: left singular vectors and singular values in descending order.
pub fn thin_svd_left(m: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let svd = m
        .view()
        .thin_svd()
        .map_err(|e| HtError::Numerical(format!("svd failed: {e:?}")))?;
    let s = svd.S();
    let p = m.rows.min(m.cols);
    Ok((Matrix::from_faer(svd.U()), (0..p).map(|i| s[i]).collect()))
}

/// Solves the square system `A·x = b` by LU with partial pivoting.
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if a.rows != a.cols || b.len() != a.rows {
        return Err(HtError::ShapeMismatch("solve needs a square system".into()));
    }
    use faer::linalg::solvers::Solve;
    let lu = a.view().partial_piv_lu();
    let rhs = Matrix::column_vector(b);
    let x = lu.solve(rhs.view());
    Ok((0..a.rows).map(|i| x[(i, 0)]).collect())
}
