use super::Matrix;
use crate::error::{HtError, Result};

/// Full tensor with the last index varying fastest (row-major order).
///
/// This is the brute-force reference every HT operation is checked against.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    sizes: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(sizes: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = sizes.iter().product();
        if n != data.len() {
            return Err(HtError::ShapeMismatch(format!("{} entries for sizes {:?}", data.len(), sizes)));
        }
        Ok(Self { sizes, data })
    }

    pub fn zeros(sizes: Vec<usize>) -> Self {
        let n = sizes.iter().product();
        Self { sizes, data: vec![0.0; n] }
    }

    pub fn from_fn(sizes: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let n: usize = sizes.iter().product();
        let mut idx = vec![0; sizes.len()];
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f(&idx));
            for mu in (0..sizes.len()).rev() {
                idx[mu] += 1;
                if idx[mu] < sizes[mu] {
                    break;
                }
                idx[mu] = 0;
            }
        }
        Self { sizes, data }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn d(&self) -> usize {
        self.sizes.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.sizes).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear_index(idx)]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &DenseTensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn sub(&self, other: &DenseTensor) -> DenseTensor {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        DenseTensor { sizes: self.sizes.clone(), data }
    }

    pub fn max_abs_diff(&self, other: &DenseTensor) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    fn check_dims(&self, dims: &[usize]) -> Result<()> {
        let d = self.sizes.len();
        if dims.is_empty() || dims.iter().any(|&m| m >= d) || dims.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HtError::ShapeMismatch(format!(
                "matricization dims {dims:?} must be a non-empty ascending subset of 0..{d}"
            )));
        }
        Ok(())
    }

    fn row_col_of(&self, idx: &[usize], dims: &[usize]) -> (usize, usize) {
        let (mut r, mut c) = (0, 0);
        let mut next = 0;
        for (mu, (&i, &n)) in idx.iter().zip(&self.sizes).enumerate() {
            if next < dims.len() && dims[next] == mu {
                r = r * n + i;
                next += 1;
            } else {
                c = c * n + i;
            }
        }
        (r, c)
    }

    fn shape_of(&self, dims: &[usize]) -> (usize, usize) {
        let rows: usize = dims.iter().map(|&m| self.sizes[m]).product();
        (rows, self.data.len() / rows)
    }

    /// `M_t(A)` with rows over the ascending dims in `dims` and columns over the
    /// complement, each composite index ordered last-dimension-fastest.
    pub fn matricize(&self, dims: &[usize]) -> Result<Matrix> {
        self.check_dims(dims)?;
        let (rows, cols) = self.shape_of(dims);
        let mut m = Matrix::zeros(rows, cols);
        self.for_each_index(|lin, idx| {
            let (r, c) = self.row_col_of(idx, dims);
            m.set(r, c, self.data[lin]);
        });
        Ok(m)
    }

    /// Inverse of [`DenseTensor::matricize`].
    pub fn from_matricized(sizes: Vec<usize>, dims: &[usize], m: &Matrix) -> Result<Self> {
        let mut t = DenseTensor::zeros(sizes);
        t.check_dims(dims)?;
        if t.shape_of(dims) != m.shape() {
            return Err(HtError::ShapeMismatch("matricized shape does not match sizes".into()));
        }
        let mut data = vec![0.0; t.data.len()];
        t.for_each_index(|lin, idx| {
            let (r, c) = t.row_col_of(idx, dims);
            data[lin] = m.get(r, c);
        });
        t.data = data;
        Ok(t)
    }

    fn for_each_index(&self, mut f: impl FnMut(usize, &[usize])) {
        let d = self.sizes.len();
        let mut idx = vec![0; d];
        for lin in 0..self.data.len() {
            f(lin, &idx);
            for mu in (0..d).rev() {
                idx[mu] += 1;
                if idx[mu] < self.sizes[mu] {
                    break;
                }
                idx[mu] = 0;
            }
        }
    }
}
