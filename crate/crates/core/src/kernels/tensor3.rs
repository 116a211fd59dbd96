use faer::MatRef;

use super::{gemm, gemm_into, Matrix};
use crate::error::{HtError, Result};

/// Three-way array stored with the first index fastest:
/// entry `(i, j, l)` lives at `i + n1·(j + n2·l)`.
///
/// With `n1 = 1` the layout coincides with a column-major `n2 × n3` matrix,
/// which is how root matrices are held.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self { dims, data: vec![0.0; dims[0] * dims[1] * dims[2]] }
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for l in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data.push(f(i, j, l));
                }
            }
        }
        Self { dims, data }
    }

    pub fn from_data(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if data.len() != dims[0] * dims[1] * dims[2] {
            return Err(HtError::ShapeMismatch(format!("{} entries for a {:?} tensor", data.len(), dims)));
        }
        Ok(Self { dims, data })
    }

    /// Views a `k1 × k2` matrix as a `1 × k1 × k2` tensor without copying.
    pub fn from_root_matrix(m: Matrix) -> Self {
        let (r, c) = m.shape();
        Self { dims: [1, r, c], data: m.into_data() }
    }

    /// Inverse of [`Tensor3::from_root_matrix`]; requires `dims[0] == 1`.
    pub fn to_root_matrix(&self) -> Matrix {
        assert_eq!(self.dims[0], 1, "not a root transfer");
        Matrix::from_col_major(self.dims[1], self.dims[2], self.data.clone()).unwrap()
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, l: usize) -> f64 {
        self.data[i + self.dims[0] * (j + self.dims[1] * l)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, l: usize, v: f64) {
        let [n1, n2, _] = self.dims;
        self.data[i + n1 * (j + n2 * l)] = v;
    }

    /// Mode-1 unfolding `n1 × (n2·n3)`, column index `j + n2·l`.
    pub fn unfold1(&self) -> Matrix {
        Matrix::from_col_major(self.dims[0], self.dims[1] * self.dims[2], self.data.clone()).unwrap()
    }

    pub fn from_unfold1(m: &Matrix, n2: usize, n3: usize) -> Result<Self> {
        if m.cols() != n2 * n3 {
            return Err(HtError::ShapeMismatch(format!("{} columns cannot fold into {n2}x{n3}", m.cols())));
        }
        Self::from_data([m.rows(), n2, n3], m.data().to_vec())
    }

    /// Mode-2 unfolding `n2 × (n1·n3)`, column index `i + n1·l`.
    pub fn unfold2(&self) -> Matrix {
        let [n1, n2, n3] = self.dims;
        let mut out = Matrix::zeros(n2, n1 * n3);
        let (block, d) = (n1 * n2, out.data_mut());
        for l in 0..n3 {
            super::transpose_into(&self.data[block * l..block * (l + 1)], n1, n2, &mut d[block * l..block * (l + 1)]);
        }
        out
    }

    pub(crate) fn view1(&self) -> MatRef<'_, f64> {
        MatRef::from_column_major_slice(&self.data, self.dims[0], self.dims[1] * self.dims[2])
    }

    /// The `(n1·n2) × n3` view, row index `i + n1·j`.
    pub(crate) fn view12(&self) -> MatRef<'_, f64> {
        MatRef::from_column_major_slice(&self.data, self.dims[0] * self.dims[1], self.dims[2])
    }

    /// `result[a,j,l] = Σ_i m[a,i]·B[i,j,l]`
    pub fn mode1(&self, m: &Matrix) -> Tensor3 {
        assert_eq!(m.cols(), self.dims[0], "mode-1 contraction size");
        let out = gemm(m.view(), self.view1());
        Tensor3 { dims: [m.rows(), self.dims[1], self.dims[2]], data: out.into_data() }
    }

    /// `result[i,a,l] = Σ_j m[a,j]·B[i,j,l]`
    pub fn mode2(&self, m: &Matrix) -> Tensor3 {
        let [n1, n2, n3] = self.dims;
        assert_eq!(m.cols(), n2, "mode-2 contraction size");
        let a = m.rows();
        let mut out = Tensor3::zeros([n1, a, n3]);
        if n1 < 16 {
            // One product on the mode-2 unfolding beats many tiny slices.
            let p = gemm(m.view(), self.unfold2().view());
            for l in 0..n3 {
                let r = n1 * a * l..n1 * a * (l + 1);
                super::transpose_into(&p.data()[r.clone()], a, n1, &mut out.data[r]);
            }
            return out;
        }
        for l in 0..n3 {
            let src = MatRef::from_column_major_slice(&self.data[n1 * n2 * l..n1 * n2 * (l + 1)], n1, n2);
            let dst = faer::MatMut::from_column_major_slice_mut(&mut out.data[n1 * a * l..n1 * a * (l + 1)], n1, a);
            gemm_into(dst, src, m.view().transpose());
        }
        out
    }

    /// `result[i,j,a] = Σ_l m[a,l]·B[i,j,l]`
    pub fn mode3(&self, m: &Matrix) -> Tensor3 {
        assert_eq!(m.cols(), self.dims[2], "mode-3 contraction size");
        let out = gemm(self.view12(), m.view().transpose());
        Tensor3 { dims: [self.dims[0], self.dims[1], m.rows()], data: out.into_data() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn scaled(&self, alpha: f64) -> Tensor3 {
        Tensor3 { dims: self.dims, data: self.data.iter().map(|x| alpha * x).collect() }
    }
}

/// Contracts `b` along `mode` (1, 2 or 3) with the columns of `m`.
pub fn mode_multiply(b: &Tensor3, mode: usize, m: &Matrix) -> Result<Tensor3> {
    let size = match mode {
        1..=3 => b.dims()[mode - 1],
        _ => return Err(HtError::ShapeMismatch(format!("mode {mode} is not 1, 2 or 3"))),
    };
    if m.cols() != size {
        return Err(HtError::ShapeMismatch(format!(
            "mode-{mode} multiply: matrix has {} columns, tensor mode has {size}",
            m.cols()
        )));
    }
    Ok(match mode {
        1 => b.mode1(m),
        2 => b.mode2(m),
        _ => b.mode3(m),
    })
}
