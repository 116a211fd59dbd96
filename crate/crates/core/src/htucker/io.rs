//! Binary tensor files.
//!
//! Layout, all little-endian:
//!
//! | bytes         | content                                   |
//! |---------------|-------------------------------------------|
//! | 0..4          | magic `HT01`                              |
//! | 4..8          | `u32` d                                   |
//! | 8..12         | `u32` flags, bit 0 = orthogonal           |
//! | 12..16        | `u32` reserved, zero                      |
//! | 16..          | `d × u64` leaf sizes `n_μ`                |
//! |               | `(2d−1) × u64` ranks `k_t` in id order    |
//! |               | node arrays as `f64` in id order          |
//!
//! Frames are column-major, transfer tensors mode-1 fastest.

use std::io::{Read, Write};
use std::sync::Arc;

use super::{HTensor, NodeData};
use crate::error::{HtError, Result};
use crate::kernels::{Matrix, Tensor3};
use crate::tree::DimensionTree;

const MAGIC: &[u8; 4] = b"HT01";
pub const HEADER_BYTES: usize = 16;

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(HtError::Parse { offset: self.pos, msg: format!("truncated while reading {what}") });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<usize> {
        let at = self.pos;
        let v = u64::from_le_bytes(self.take(8, what)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| HtError::Parse { offset: at, msg: format!("{what} {v} does not fit") })
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = n.checked_mul(8).ok_or_else(|| HtError::Parse { offset: self.pos, msg: format!("{what} too large") })?;
        let raw = self.take(bytes, what)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

impl HTensor {
    /// Exact size in bytes of the serialized form.
    pub fn serialized_len(&self) -> usize {
        HEADER_BYTES + 8 * (self.d() + self.nodes.len()) + 8 * self.storage_size()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.d() as u32).to_le_bytes());
        out.extend_from_slice(&u32::from(self.orthogonal).to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for &n in &self.sizes {
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        for node in &self.nodes {
            out.extend_from_slice(&(node.rank() as u64).to_le_bytes());
        }
        for node in &self.nodes {
            let data = match node {
                NodeData::Frame(u) => u.data(),
                NodeData::Transfer(b) => b.data(),
            };
            data.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut c = Cursor { buf, pos: 0 };
        if c.take(4, "magic")? != MAGIC {
            return Err(HtError::Parse { offset: 0, msg: "bad magic, expected HT01".into() });
        }
        let d = c.u32("order")? as usize;
        let flags_at = c.pos;
        let flags = c.u32("flags")?;
        if flags & !1 != 0 {
            return Err(HtError::Parse { offset: flags_at, msg: format!("unknown flags {flags:#x}") });
        }
        c.u32("reserved")?;
        let tree = Arc::new(DimensionTree::balanced(d).map_err(|e| HtError::Parse { offset: 4, msg: e.to_string() })?);
        let sizes = (0..d).map(|_| c.u64("leaf size")).collect::<Result<Vec<_>>>()?;
        let ranks_at = c.pos;
        let ranks = (0..tree.num_nodes()).map(|_| c.u64("rank")).collect::<Result<Vec<_>>>()?;
        if ranks[0] != 1 || ranks.contains(&0) || sizes.contains(&0) {
            return Err(HtError::Parse { offset: ranks_at, msg: "sizes and ranks must be positive with root rank 1".into() });
        }
        let mut nodes = Vec::with_capacity(tree.num_nodes());
        for t in 0..tree.num_nodes() {
            nodes.push(match (tree.leaf_dim(t), tree.sons(t)) {
                (Some(mu), _) => {
                    let data = c.f64s(sizes[mu] * ranks[t], "leaf frame")?;
                    NodeData::Frame(Matrix::from_col_major(sizes[mu], ranks[t], data)?)
                }
                (None, Some([a, b])) => {
                    let dims = [ranks[t], ranks[a], ranks[b]];
                    let data = c.f64s(dims.iter().product(), "transfer tensor")?;
                    NodeData::Transfer(Tensor3::from_data(dims, data)?)
                }
                _ => unreachable!(),
            });
        }
        if c.pos != buf.len() {
            return Err(HtError::Parse { offset: c.pos, msg: format!("{} trailing bytes", buf.len() - c.pos) });
        }
        HTensor::from_parts_unchecked(tree, nodes, flags & 1 == 1)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}
