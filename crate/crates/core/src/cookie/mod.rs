//! The nine-inclusion diffusion problem in HT format: one tree dimension per
//! inclusion coefficient plus a final spatial dimension.

pub mod fem;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::arith;
use crate::error::{HtError, Result};
use crate::arith::TruncationControl;
use crate::htucker::{GeneralizedMatrix, HTOperator, HTensor, OperatorNode};
use crate::solvers::{power_iteration_lambda_max, Backend, Hierarchy, MgLevel, PowerEstimate, SolverConfig};
use crate::kernels::{CsrMatrix, Matrix, Tensor3};
use crate::tree::{DimensionTree, NodeId};

pub use fem::{ElementKind, StructuredGrid, NUM_COOKIES};

/// Tree dimension of the spatial unknowns.
pub const SPATIAL_DIM: usize = NUM_COOKIES;
/// Number of affine terms `A_0..A_9`.
pub const NUM_TERMS: usize = NUM_COOKIES + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorForm {
    /// Rank 10 everywhere below the root, diagonal transfers.
    Full,
    /// `Full` with duplicate parameter-leaf columns merged (leaf rank 2).
    CompressedLeaves,
    /// Exact minimal hierarchical ranks of the affine sum.
    #[default]
    Minimal,
}

/// Problem description read by the command-line driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub max_level: usize,
    pub points_per_parameter: usize,
    pub parameter_range: [f64; 2],
    pub element: ElementKind,
    pub operator_form: OperatorForm,
    pub caps: Vec<usize>,
    pub eps: f64,
    pub cg_steps: usize,
    pub mg_cycles: usize,
    pub smoothing_steps: usize,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            max_level: 0,
            points_per_parameter: 10,
            parameter_range: [0.5, 1.5],
            element: ElementKind::P1,
            operator_form: OperatorForm::Minimal,
            caps: vec![20, 30, 40, 50],
            eps: 1e-4,
            cg_steps: 25,
            mg_cycles: 10,
            smoothing_steps: 5,
            lambda_min: Some(0.4),
            lambda_max: None,
        }
    }
}

impl ProblemConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.parameter_range;
        if self.points_per_parameter == 0 {
            return Err(HtError::Config("points_per_parameter must be positive".into()));
        }
        if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo > -1.0) {
            return Err(HtError::Config(format!("parameter range [{lo}, {hi}] must be ordered and keep 1 + α positive")));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) || self.caps.contains(&0) {
            return Err(HtError::Config("eps and rank caps must be positive".into()));
        }
        for v in [self.lambda_min, self.lambda_max].into_iter().flatten() {
            if !(v.is_finite() && v > 0.0) {
                return Err(HtError::Config(format!("spectral bound {v} must be positive")));
            }
        }
        Ok(())
    }

    /// Equidistant values covering the range; a single point sits at its centre.
    pub fn parameter_values(&self) -> Vec<f64> {
        let [lo, hi] = self.parameter_range;
        let n = self.points_per_parameter;
        if n == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }
}

/// Assembled data of one grid level.
#[derive(Debug, Clone)]
pub struct Level {
    pub grid: StructuredGrid,
    /// `A_0..A_9`.
    pub matrices: Vec<CsrMatrix>,
    pub rhs: Vec<f64>,
    /// Interpolation from the next coarser level; `None` on level 0.
    pub prolongation: Option<CsrMatrix>,
}

/// Grid hierarchy plus HT builders for one problem description.
#[derive(Debug, Clone)]
pub struct CookieProblem {
    config: ProblemConfig,
    tree: Arc<DimensionTree>,
    alpha: Vec<f64>,
    levels: Vec<Level>,
}

impl CookieProblem {
    pub fn new(config: ProblemConfig) -> Result<Self> {
        config.validate()?;
        let kind = config.element;
        let levels = (0..=config.max_level)
            .map(|l| {
                let grid = StructuredGrid::new(l);
                Ok(Level {
                    grid,
                    matrices: fem::assemble_stiffness(grid, kind),
                    rhs: fem::assemble_rhs(grid, kind),
                    prolongation: if l == 0 { None } else { Some(fem::prolongation(grid, kind)?) },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { alpha: config.parameter_values(), tree: Arc::new(DimensionTree::balanced(NUM_TERMS)?), config, levels })
    }

    pub fn config(&self) -> &ProblemConfig {
        &self.config
    }

    pub fn tree(&self) -> &Arc<DimensionTree> {
        &self.tree
    }

    pub fn parameter_values(&self) -> &[f64] {
        &self.alpha
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, l: usize) -> Result<&Level> {
        self.levels.get(l).ok_or_else(|| HtError::Config(format!("level {l} not in hierarchy 0..={}", self.levels.len() - 1)))
    }

    pub fn sizes(&self, l: usize) -> Result<Vec<usize>> {
        let mut s = vec![self.alpha.len(); NUM_COOKIES];
        s.push(self.level(l)?.grid.num_inner());
        Ok(s)
    }

    /// Coefficients at a parameter multi-index.
    pub fn alpha_at(&self, idx: &[usize]) -> Result<Vec<f64>> {
        if idx.len() != NUM_COOKIES || idx.iter().any(|&i| i >= self.alpha.len()) {
            return Err(HtError::IndexOutOfBounds(format!("parameter index {idx:?} with {} points each", self.alpha.len())));
        }
        Ok(idx.iter().map(|&i| self.alpha[i]).collect())
    }

    /// `A_0 + Σ α_μ A_μ` as a dense matrix.
    pub fn dense_operator(&self, l: usize, alpha: &[f64]) -> Result<Matrix> {
        let mats = &self.level(l)?.matrices;
        if alpha.len() != NUM_COOKIES {
            return Err(HtError::ShapeMismatch(format!("{} coefficients", alpha.len())));
        }
        let mut a = mats[0].to_dense();
        for (am, &w) in mats[1..].iter().zip(alpha) {
            a = a.add(&am.to_dense().scaled(w))?;
        }
        Ok(a)
    }

    pub fn operator(&self, l: usize) -> Result<HTOperator> {
        self.operator_with_form(l, self.config.operator_form)
    }

    pub fn operator_with_form(&self, l: usize, form: OperatorForm) -> Result<HTOperator> {
        let level = self.level(l)?;
        let layout = if form == OperatorForm::Minimal { Layout::Minimal } else { Layout::Full };
        let op = build_operator(&self.tree, &self.alpha, &level.matrices, layout)?;
        Ok(if form == OperatorForm::CompressedLeaves { op.dedup_leaves() } else { op })
    }

    /// Rank-one right-hand side: ones in every parameter dimension.
    pub fn rhs_tensor(&self, l: usize) -> Result<HTensor> {
        let mut vecs = vec![vec![1.0; self.alpha.len()]; NUM_COOKIES];
        vecs.push(self.level(l)?.rhs.clone());
        HTensor::rank_one(self.tree.clone(), &vecs)
    }

    /// Spatial restriction from level `l` to `l − 1`.
    pub fn restrict(&self, x: &HTensor, l: usize) -> Result<HTensor> {
        arith::map_leaf(x, SPATIAL_DIM, &self.restriction_matrix(l)?)
    }

    /// Spatial interpolation from level `l − 1` to `l`.
    pub fn prolongate(&self, x: &HTensor, l: usize) -> Result<HTensor> {
        arith::map_leaf(x, SPATIAL_DIM, &self.prolongation_matrix(l)?)
    }

    pub fn prolongation_matrix(&self, l: usize) -> Result<GeneralizedMatrix> {
        let p = self.level(l)?.prolongation.clone().ok_or_else(|| HtError::Config("level 0 has no coarser grid".into()))?;
        Ok(GeneralizedMatrix::Sparse(p))
    }

    pub fn restriction_matrix(&self, l: usize) -> Result<GeneralizedMatrix> {
        let p = self.level(l)?.prolongation.as_ref().ok_or_else(|| HtError::Config("level 0 has no coarser grid".into()))?;
        Ok(GeneralizedMatrix::Sparse(p.transpose()))
    }
}

impl CookieProblem {
    /// Solver settings for one rank cap: accuracy truncation at `eps`
    /// limited to `cap`, plus the configured step counts.
    pub fn solver_config(&self, cap: usize) -> SolverConfig {
        let c = &self.config;
        SolverConfig {
            truncation: TruncationControl::accuracy(c.eps, Some(cap)),
            max_cg_steps: c.cg_steps,
            pre_smoothing: c.smoothing_steps,
            post_smoothing: c.smoothing_steps,
            lambda_min: c.lambda_min,
            lambda_max: c.lambda_max,
            ..SolverConfig::default()
        }
    }

    /// Largest eigenvalue of the level-`l` operator by power iteration from
    /// a seeded rank-one tensor.
    pub fn estimate_lambda_max<B: Backend>(&self, be: &B, l: usize, cfg: &SolverConfig, seed: u64) -> Result<PowerEstimate> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = self.level(l)?.grid.num_inner();
        let mut vecs = vec![vec![1.0; self.alpha.len()]; NUM_COOKIES];
        vecs.push((0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
        let start = be.load(&HTensor::rank_one(self.tree.clone(), &vecs)?)?;
        power_iteration_lambda_max(be, &be.load_operator(&self.operator(l)?)?, &start, cfg)
    }

    /// Gershgorin bound on `λ_max(A(α))` over the parameter box.
    pub fn gershgorin_bound(&self, l: usize) -> Result<f64> {
        let mats = &self.level(l)?.matrices;
        let [lo, hi] = self.config.parameter_range;
        let amax = lo.abs().max(hi.abs());
        let n = mats[0].rows();
        let mut best = 0.0f64;
        for i in 0..n {
            let mut s: f64 = mats[0].row_entries(i).map(|e| e.1.abs()).sum();
            for m in &mats[1..] {
                s += amax * m.row_entries(i).map(|e| e.1.abs()).sum::<f64>();
            }
            best = best.max(s);
        }
        Ok(best)
    }

    /// Multigrid hierarchy with `ω_l = 2/(λ_min,l + λ_max,l)`, where
    /// `λ_max,l` is the Gershgorin bound of level `l` and `λ_min,l` scales
    /// the configured coarse value by `h²`. A configured `lambda_max`
    /// replaces the bound on level 0 only.
    pub fn hierarchy<B: Backend>(&self, be: &B, cfg: &SolverConfig) -> Result<Hierarchy<B::Operator>> {
        let lambda_min = cfg.lambda_min.ok_or_else(|| HtError::Config("multigrid smoothing needs lambda_min".into()))?;
        let levels = (0..self.levels.len())
            .map(|l| {
                let h2 = self.levels[l].grid.h().powi(2);
                let lambda_max = match (l, cfg.lambda_max) {
                    (0, Some(v)) => v,
                    _ => self.gershgorin_bound(l)?,
                };
                let transfer = if l == 0 { None } else { Some((self.restriction_matrix(l)?, self.prolongation_matrix(l)?)) };
                Ok(MgLevel { op: be.load_operator(&self.operator(l)?)?, omega: 2.0 / (lambda_min * h2 + lambda_max), transfer })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Hierarchy { levels, dim: SPATIAL_DIM })
    }
}

/// Spatial solution at one parameter combination.
pub fn extract_solution(x: &HTensor, idx: &[usize]) -> Result<Vec<f64>> {
    if x.d() != NUM_TERMS || idx.len() != NUM_COOKIES {
        return Err(HtError::ShapeMismatch(format!("{} parameter indices for a tensor with d = {}", idx.len(), x.d())));
    }
    let mut weights = Vec::with_capacity(NUM_COOKIES);
    for (mu, &i) in idx.iter().enumerate() {
        let n = x.sizes()[mu];
        if i >= n {
            return Err(HtError::IndexOutOfBounds(format!("parameter {mu} index {i} of {n}")));
        }
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        weights.push(e);
    }
    arith::partial_contract(x, SPATIAL_DIM, &weights)
}

/// Weighted mean over parameter combinations; `None` means uniform weights.
pub fn parameter_mean(x: &HTensor, weights: Option<&[Vec<f64>]>) -> Result<Vec<f64>> {
    if x.d() != NUM_TERMS {
        return Err(HtError::ShapeMismatch(format!("tensor with d = {}", x.d())));
    }
    let uniform: Vec<Vec<f64>>;
    let w = match weights {
        Some(w) => w,
        None => {
            uniform = x.sizes()[..NUM_COOKIES].iter().map(|&n| vec![1.0 / n as f64; n]).collect();
            &uniform
        }
    };
    arith::partial_contract(x, SPATIAL_DIM, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Full,
    Minimal,
}

/// Basis element of a node's frame. `Term(j)` is the restriction of affine
/// term `j` to the node; `One` the all-ones factor shared by every term whose
/// parameter lies elsewhere; `Rest` the sum of all terms whose parameter-side
/// complement is all ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    One,
    Rest,
    Term(usize),
}

struct Classifier<'a> {
    tree: &'a DimensionTree,
    layout: Layout,
}

impl Classifier<'_> {
    fn holds_param(&self, t: NodeId, j: usize) -> bool {
        j > 0 && self.tree.dims(t).contains(&(j - 1))
    }

    fn spatial(&self, t: NodeId) -> bool {
        self.tree.dims(t).contains(&SPATIAL_DIM)
    }

    fn classes(&self, t: NodeId) -> Vec<Class> {
        if t == self.tree.root() {
            return vec![Class::Rest];
        }
        match self.layout {
            Layout::Full => (0..NUM_TERMS).map(Class::Term).collect(),
            Layout::Minimal if self.spatial(t) => {
                std::iter::once(Class::Rest).chain((1..NUM_TERMS).filter(|&j| !self.holds_param(t, j)).map(Class::Term)).collect()
            }
            Layout::Minimal => std::iter::once(Class::One).chain((1..NUM_TERMS).filter(|&j| self.holds_param(t, j)).map(Class::Term)).collect(),
        }
    }

    fn class_of(&self, t: NodeId, j: usize) -> Class {
        if t == self.tree.root() {
            return Class::Rest;
        }
        match self.layout {
            Layout::Full => Class::Term(j),
            Layout::Minimal if self.spatial(t) => {
                if j == 0 || self.holds_param(t, j) {
                    Class::Rest
                } else {
                    Class::Term(j)
                }
            }
            Layout::Minimal => {
                if self.holds_param(t, j) {
                    Class::Term(j)
                } else {
                    Class::One
                }
            }
        }
    }
}

fn build_operator(tree: &Arc<DimensionTree>, alpha: &[f64], mats: &[CsrMatrix], layout: Layout) -> Result<HTOperator> {
    let cl = Classifier { tree, layout };
    let classes: Vec<Vec<Class>> = (0..tree.num_nodes()).map(|t| cl.classes(t)).collect();
    let index = |t: NodeId, j: usize| {
        let c = cl.class_of(t, j);
        classes[t].iter().position(|&x| x == c).expect("every term has a class")
    };
    let ones = GeneralizedMatrix::Diagonal(vec![1.0; alpha.len()]);
    let nodes = (0..tree.num_nodes())
        .map(|t| match (tree.leaf_dim(t), tree.sons(t)) {
            (Some(SPATIAL_DIM), _) => OperatorNode::Leaf(
                classes[t]
                    .iter()
                    .map(|c| match c {
                        Class::Term(j) => GeneralizedMatrix::Sparse(mats[*j].clone()),
                        // The only term with ones on every parameter dimension.
                        Class::Rest => GeneralizedMatrix::Sparse(mats[0].clone()),
                        Class::One => unreachable!("spatial leaves carry no ones factor"),
                    })
                    .collect(),
            ),
            (Some(mu), _) => OperatorNode::Leaf(
                classes[t]
                    .iter()
                    .map(|c| match c {
                        Class::Term(j) if *j == mu + 1 => GeneralizedMatrix::Diagonal(alpha.to_vec()),
                        _ => ones.clone(),
                    })
                    .collect(),
            ),
            (None, Some([s1, s2])) => {
                let mut h = Tensor3::zeros([classes[t].len(), classes[s1].len(), classes[s2].len()]);
                for j in 0..NUM_TERMS {
                    h.set(index(t, j), index(s1, j), index(s2, j), 1.0);
                }
                OperatorNode::Transfer(h)
            }
            _ => unreachable!(),
        })
        .collect();
    HTOperator::from_parts(tree.clone(), nodes)
}
