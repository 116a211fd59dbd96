//! Structured finite elements on `[0,7]²` with nine square inclusions.

use serde::{Deserialize, Serialize};

use crate::error::{HtError, Result};
use crate::kernels::CsrMatrix;

/// Number of inclusions, i.e. parameter dimensions.
pub const NUM_COOKIES: usize = 9;
/// Side length of the domain.
pub const DOMAIN: f64 = 7.0;

/// Inclusion midpoints, x varying fastest.
pub fn cookie_centers() -> [(f64, f64); NUM_COOKIES] {
    let mut c = [(0.0, 0.0); NUM_COOKIES];
    for (i, ci) in c.iter_mut().enumerate() {
        *ci = (1.5 + 2.0 * (i % 3) as f64, 1.5 + 2.0 * (i / 3) as f64);
    }
    c
}

/// Inclusion containing the point, using the open max-norm ball of radius 1/2.
pub fn cookie_at(x: f64, y: f64) -> Option<usize> {
    cookie_centers().iter().position(|&(cx, cy)| (x - cx).abs().max((y - cy).abs()) < 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    /// Linear triangles, each square split along its (0,0)–(1,1) diagonal.
    #[default]
    P1,
    /// Bilinear quadrilaterals.
    Q1,
}

/// Uniform grid of mesh width `2^-level`; only inner nodes carry unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructuredGrid {
    pub level: usize,
}

impl StructuredGrid {
    pub fn new(level: usize) -> Self {
        Self { level }
    }

    pub fn h(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    /// Elements per side.
    pub fn cells(&self) -> usize {
        7 << self.level
    }

    /// Inner nodes per side.
    pub fn m(&self) -> usize {
        self.cells() - 1
    }

    pub fn num_inner(&self) -> usize {
        self.m() * self.m()
    }

    /// Unknown index of grid node `(ix, iy)` in `0..=cells`; `None` on the boundary.
    pub fn dof(&self, ix: usize, iy: usize) -> Option<usize> {
        let m = self.m();
        (ix >= 1 && iy >= 1 && ix <= m && iy <= m).then(|| (ix - 1) + m * (iy - 1))
    }

    /// Inclusion owning element `(ex, ey)`, decided by the element centre.
    pub fn element_cookie(&self, ex: usize, ey: usize) -> Option<usize> {
        let h = self.h();
        cookie_at((ex as f64 + 0.5) * h, (ey as f64 + 0.5) * h)
    }
}

/// Local stiffness blocks with their node offsets inside one square. The
/// Laplacian stiffness is invariant under scaling in 2D, so no `h` appears.
fn local_blocks(kind: ElementKind) -> Vec<(Vec<(usize, usize)>, Vec<Vec<f64>>)> {
    match kind {
        ElementKind::Q1 => {
            let k = [[4.0, -1.0, -2.0, -1.0], [-1.0, 4.0, -1.0, -2.0], [-2.0, -1.0, 4.0, -1.0], [-1.0, -2.0, -1.0, 4.0]];
            vec![(vec![(0, 0), (1, 0), (1, 1), (0, 1)], k.iter().map(|r| r.iter().map(|v| v / 6.0).collect()).collect())]
        }
        ElementKind::P1 => {
            let lower = [[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]];
            let upper = [[1.0, 0.0, -1.0], [0.0, 1.0, -1.0], [-1.0, -1.0, 2.0]];
            let half = |k: [[f64; 3]; 3]| k.iter().map(|r| r.iter().map(|v| v / 2.0).collect()).collect();
            vec![(vec![(0, 0), (1, 0), (1, 1)], half(lower)), (vec![(0, 0), (1, 1), (0, 1)], half(upper))]
        }
    }
}

/// Stiffness matrix with elementwise coefficient `coef(ex, ey)`; elements
/// with coefficient zero are skipped.
pub fn assemble_weighted(grid: StructuredGrid, kind: ElementKind, coef: impl Fn(usize, usize) -> f64) -> CsrMatrix {
    let blocks = local_blocks(kind);
    let mut trip = Vec::new();
    for ey in 0..grid.cells() {
        for ex in 0..grid.cells() {
            let c = coef(ex, ey);
            if c == 0.0 {
                continue;
            }
            for (nodes, k) in &blocks {
                let dofs: Vec<Option<usize>> = nodes.iter().map(|&(dx, dy)| grid.dof(ex + dx, ey + dy)).collect();
                for (a, ra) in dofs.iter().enumerate() {
                    for (b, rb) in dofs.iter().enumerate() {
                        if let (Some(i), Some(j)) = (ra, rb) {
                            trip.push((*i, *j, c * k[a][b]));
                        }
                    }
                }
            }
        }
    }
    let n = grid.num_inner();
    CsrMatrix::from_triplets(n, n, &trip).expect("indices are in range")
}

/// `A_0` (whole domain) followed by `A_1..A_9` (one inclusion each).
pub fn assemble_stiffness(grid: StructuredGrid, kind: ElementKind) -> Vec<CsrMatrix> {
    let mut out = vec![assemble_weighted(grid, kind, |_, _| 1.0)];
    for mu in 0..NUM_COOKIES {
        out.push(assemble_weighted(grid, kind, |ex, ey| if grid.element_cookie(ex, ey) == Some(mu) { 1.0 } else { 0.0 }));
    }
    out
}

/// Direct assembly for the coefficient `1 + α_μ` on inclusion μ and 1 elsewhere.
pub fn assemble_with_sigma(grid: StructuredGrid, kind: ElementKind, alpha: &[f64]) -> Result<CsrMatrix> {
    if alpha.len() != NUM_COOKIES {
        return Err(HtError::ShapeMismatch(format!("{} coefficients for {NUM_COOKIES} inclusions", alpha.len())));
    }
    Ok(assemble_weighted(grid, kind, |ex, ey| grid.element_cookie(ex, ey).map_or(1.0, |mu| 1.0 + alpha[mu])))
}

/// Consistent load vector for `f ≡ 1`.
pub fn assemble_rhs(grid: StructuredGrid, kind: ElementKind) -> Vec<f64> {
    let h2 = grid.h() * grid.h();
    let mut b = vec![0.0; grid.num_inner()];
    for (nodes, _) in local_blocks(kind) {
        let share = h2 / (local_blocks(kind).len() * nodes.len()) as f64;
        for ey in 0..grid.cells() {
            for ex in 0..grid.cells() {
                for &(dx, dy) in &nodes {
                    if let Some(i) = grid.dof(ex + dx, ey + dy) {
                        b[i] += share;
                    }
                }
            }
        }
    }
    b
}

/// Interpolation from the inner nodes of level `fine.level − 1` to `fine`.
/// The midpoint of each coarse square takes the average of the two corners
/// joined by the element diagonal for P1 and of all four corners for Q1.
pub fn prolongation(fine: StructuredGrid, kind: ElementKind) -> Result<CsrMatrix> {
    if fine.level == 0 {
        return Err(HtError::Config("level 0 has no coarser grid".into()));
    }
    let coarse = StructuredGrid::new(fine.level - 1);
    let mut trip = Vec::new();
    for fy in 1..=fine.m() {
        for fx in 1..=fine.m() {
            let row = fine.dof(fx, fy).unwrap();
            let (cx, cy) = (fx / 2, fy / 2);
            let parents: Vec<((usize, usize), f64)> = match (fx % 2, fy % 2) {
                (0, 0) => vec![((cx, cy), 1.0)],
                (1, 0) => vec![((cx, cy), 0.5), ((cx + 1, cy), 0.5)],
                (0, 1) => vec![((cx, cy), 0.5), ((cx, cy + 1), 0.5)],
                _ => match kind {
                    ElementKind::P1 => vec![((cx, cy), 0.5), ((cx + 1, cy + 1), 0.5)],
                    ElementKind::Q1 => {
                        vec![((cx, cy), 0.25), ((cx + 1, cy), 0.25), ((cx, cy + 1), 0.25), ((cx + 1, cy + 1), 0.25)]
                    }
                },
            };
            for ((px, py), w) in parents {
                if let Some(col) = coarse.dof(px, py) {
                    trip.push((row, col, w));
                }
            }
        }
    }
    CsrMatrix::from_triplets(fine.num_inner(), coarse.num_inner(), &trip)
}
