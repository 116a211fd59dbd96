//! Timing harness for the core HT operations.
//!
//! For the message-passing backend the reported time is the critical path
//! of the protocol, i.e. the runtime with one core per worker; on the serial
//! backend it is wall time.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arith::{self, TruncationControl};
use crate::dist::WorkerTopology;
use crate::error::{HtError, Result};
use crate::htucker::{storage_size_for, GeneralizedMatrix, HTOperator, HTensor, NodeData, OperatorNode, RankVector};
use crate::kernels::Tensor3;
use crate::tree::DimensionTree;

/// Default refusal threshold for predicted allocations.
pub const DEFAULT_MEMORY_LIMIT: u64 = 2 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchOp {
    Evaluate,
    InnerProduct,
    Orthogonalize,
    Truncate,
    ApplyOperator,
    Add,
}

impl BenchOp {
    pub const ALL: [BenchOp; 6] = [
        BenchOp::Evaluate,
        BenchOp::InnerProduct,
        BenchOp::Orthogonalize,
        BenchOp::Truncate,
        BenchOp::ApplyOperator,
        BenchOp::Add,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchOp::Evaluate => "evaluate",
            BenchOp::InnerProduct => "inner_product",
            BenchOp::Orthogonalize => "orthogonalize",
            BenchOp::Truncate => "truncate",
            BenchOp::ApplyOperator => "apply_operator",
            BenchOp::Add => "add",
        }
    }
}

impl fmt::Display for BenchOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchOp {
    type Err = HtError;

    fn from_str(s: &str) -> Result<Self> {
        BenchOp::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| HtError::Config(format!("unknown operation {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchBackend {
    #[default]
    Serial,
    Dist,
}

impl fmt::Display for BenchBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchBackend::Serial => "serial",
            BenchBackend::Dist => "dist",
        })
    }
}

impl FromStr for BenchBackend {
    type Err = HtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "serial" => Ok(BenchBackend::Serial),
            "dist" => Ok(BenchBackend::Dist),
            _ => Err(HtError::Config(format!("unknown backend {s:?}"))),
        }
    }
}

/// Leaf size used for each rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafSize {
    Fixed(usize),
    /// `n = k`, which keeps leaf work below transfer work in rank sweeps.
    MatchRank,
}

impl LeafSize {
    pub fn at(self, k: usize) -> usize {
        match self {
            LeafSize::Fixed(n) => n,
            LeafSize::MatchRank => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub op: BenchOp,
    pub ds: Vec<usize>,
    pub n: LeafSize,
    pub ks: Vec<usize>,
    pub reps: usize,
    pub backend: BenchBackend,
    pub seed: u64,
    /// Operator rank for `apply_operator`; `None` uses the tensor rank.
    pub op_rank: Option<usize>,
    /// Entries evaluated per timed sample of `evaluate`.
    pub evals: usize,
}

impl BenchSpec {
    pub fn new(op: BenchOp, ds: Vec<usize>, n: usize, ks: Vec<usize>) -> Self {
        Self { op, ds, n: LeafSize::Fixed(n), ks, reps: 3, backend: BenchBackend::Serial, seed: 1, op_rank: Some(2), evals: 20 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(HtError::Config(format!("{what} must be positive")));
        if self.ds.is_empty() || self.ds.iter().any(|&d| d < 2) {
            return Err(HtError::Config("every d must be at least 2".into()));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return bad("every k");
        }
        if self.n == LeafSize::Fixed(0) {
            return bad("n");
        }
        if self.reps == 0 {
            return bad("reps");
        }
        if self.evals == 0 {
            return bad("evals");
        }
        if self.op_rank == Some(0) {
            return bad("operator rank");
        }
        Ok(())
    }

    /// Bytes the largest case allocates for inputs and results.
    pub fn predicted_bytes(&self) -> u64 {
        let mut worst = 0u64;
        for &d in &self.ds {
            let Ok(tree) = DimensionTree::balanced(d) else { continue };
            for &k in &self.ks {
                let n = self.n.at(k);
                let sizes = vec![n; d];
                let size = |r: usize| storage_size_for(&tree, &sizes, &RankVector::uniform(&tree, r).clamped(&tree, &sizes)) as u64;
                let r = self.op_rank.unwrap_or(k);
                let words = match self.op {
                    BenchOp::Evaluate => size(k),
                    BenchOp::InnerProduct => 2 * size(k),
                    BenchOp::Orthogonalize => 2 * size(k),
                    BenchOp::Truncate => 3 * size(k),
                    BenchOp::Add => 2 * size(k) + size(2 * k),
                    BenchOp::ApplyOperator => {
                        let op = (d * r * n + (d - 1) * r * r * r) as u64;
                        size(k) + op + size(k * r)
                    }
                };
                worst = worst.max(words);
            }
        }
        worst * 8
    }
}

/// One timed sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub op: BenchOp,
    pub d: usize,
    pub n: usize,
    pub k: usize,
    pub rep: usize,
    pub backend: BenchBackend,
    pub seconds: f64,
    pub wall_seconds: f64,
    pub median_seconds: f64,
}

impl BenchRow {
    pub const CSV_HEADER: &'static str = "op,d,n,k,rep,backend,seconds,wall_seconds,median_seconds";
}

/// Random tensor whose nodes are scaled so that the represented tensor
/// has norm close to one at any depth; raw uniform entries grow doubly
/// exponentially with the tree depth.
pub fn random_tensor(tree: Arc<DimensionTree>, sizes: &[usize], ranks: &RankVector, seed: u64) -> Result<HTensor> {
    let raw = HTensor::random(tree.clone(), sizes, ranks, seed)?;
    let nodes = raw
        .nodes()
        .iter()
        .map(|node| match node {
            NodeData::Frame(u) => NodeData::Frame(u.scaled((3.0 / u.rows() as f64).sqrt())),
            NodeData::Transfer(b) => {
                let [_, k1, k2] = b.dims();
                NodeData::Transfer(b.scaled((3.0 / (k1 * k2) as f64).sqrt()))
            }
        })
        .collect();
    HTensor::from_parts(tree, nodes, false)
}

/// Random operator with diagonal leaf matrices and uniform rank `r`.
pub fn random_operator(tree: Arc<DimensionTree>, n: usize, r: usize, seed: u64) -> Result<HTOperator> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = (0..tree.num_nodes())
        .map(|t| match tree.sons(t) {
            None => OperatorNode::Leaf(
                (0..r).map(|_| GeneralizedMatrix::Diagonal((0..n).map(|_| rng.random_range(-1.0..=1.0)).collect())).collect(),
            ),
            Some(_) => {
                let kt = if t == 0 { 1 } else { r };
                OperatorNode::Transfer(Tensor3::from_fn([kt, r, r], |_, _, _| rng.random_range(-1.0..=1.0)))
            }
        })
        .collect();
    HTOperator::from_parts(tree, nodes)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// Keeps freed memory in the process so timed samples do not pay for page
/// faults on freshly mapped buffers.
fn retain_heap_pages() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    {
        static ONCE: std::sync::Once = std::sync::Once::new();
        ONCE.call_once(|| unsafe {
            libc::mallopt(libc::M_MMAP_THRESHOLD, 32 << 20);
            libc::mallopt(libc::M_TRIM_THRESHOLD, 256 << 20);
            libc::mallopt(libc::M_TOP_PAD, 64 << 20);
        });
    }
}

/// Runs every `(d, k)` case once untimed and then `reps` times. Refuses cases predicted to exceed
/// `limit` bytes unless `limit` is `None`.
pub fn run_bench(spec: &BenchSpec, limit: Option<u64>) -> Result<Vec<BenchRow>> {
    spec.validate()?;
    if let Some(limit) = limit {
        let predicted = spec.predicted_bytes();
        if predicted > limit {
            return Err(HtError::ResourceLimit { predicted, limit });
        }
    }
    retain_heap_pages();
    let mut rows = Vec::new();
    for &d in &spec.ds {
        let tree = Arc::new(DimensionTree::balanced(d)?);
        let topo = match spec.backend {
            BenchBackend::Dist => Some(WorkerTopology::spawn(tree.clone())?),
            BenchBackend::Serial => None,
        };
        for &k in &spec.ks {
            let n = spec.n.at(k);
            let start = rows.len();
            time_case(spec, &tree, topo.as_ref(), n, k, spec.seed)?;
            for rep in 0..spec.reps {
                let seed = spec.seed.wrapping_add((rep as u64) << 32).wrapping_add((d * 1000 + k) as u64);
                let (seconds, wall_seconds) = time_case(spec, &tree, topo.as_ref(), n, k, seed)?;
                rows.push(BenchRow { op: spec.op, d, n, k, rep, backend: spec.backend, seconds, wall_seconds, median_seconds: 0.0 });
            }
            let med = median(&rows[start..].iter().map(|r| r.seconds).collect::<Vec<_>>());
            rows[start..].iter_mut().for_each(|r| r.median_seconds = med);
        }
    }
    Ok(rows)
}

fn time_case(
    spec: &BenchSpec,
    tree: &Arc<DimensionTree>,
    topo: Option<&WorkerTopology>,
    n: usize,
    k: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let sizes = vec![n; tree.d()];
    let ranks = RankVector::uniform(tree, k).clamped(tree, &sizes);
    let a = random_tensor(tree.clone(), &sizes, &ranks, seed)?;
    let c = random_tensor(tree.clone(), &sizes, &ranks, seed ^ 0x9e37_79b9)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices: Vec<Vec<usize>> = (0..spec.evals).map(|_| (0..tree.d()).map(|_| rng.random_range(0..n)).collect()).collect();
    let ctl = TruncationControl::FixedRank(arith::RankTarget::PerNode(ranks.clone()));
    let op = match spec.op {
        BenchOp::ApplyOperator => Some(random_operator(tree.clone(), n, spec.op_rank.unwrap_or(k), seed ^ 0x5bd1)?),
        _ => None,
    };

    match topo {
        None => {
            let t0 = Instant::now();
            match spec.op {
                BenchOp::Evaluate => {
                    for idx in &indices {
                        std::hint::black_box(arith::evaluate_entry(&a, idx)?);
                    }
                }
                BenchOp::InnerProduct => {
                    std::hint::black_box(arith::inner_product(&a, &c)?);
                }
                BenchOp::Orthogonalize => {
                    std::hint::black_box(arith::orthogonalize(&a));
                }
                BenchOp::Truncate => {
                    std::hint::black_box(arith::truncate(&a, &ctl)?);
                }
                BenchOp::ApplyOperator => {
                    std::hint::black_box(arith::apply_operator(op.as_ref().unwrap(), &a)?);
                }
                BenchOp::Add => {
                    std::hint::black_box(arith::add(&a, &c)?);
                }
            }
            let s = t0.elapsed().as_secs_f64();
            Ok((s, s))
        }
        Some(topo) => {
            let da = topo.scatter(&a)?;
            let (mut crit, mut wall) = (0.0, 0.0);
            let mut tally = || {
                let st = topo.last_stats();
                crit += st.critical_path;
                wall += st.wall.as_secs_f64();
            };
            match spec.op {
                BenchOp::Evaluate => {
                    for idx in &indices {
                        topo.evaluate(&da, idx)?;
                        tally();
                    }
                }
                BenchOp::InnerProduct => {
                    let dc = topo.scatter(&c)?;
                    topo.inner_product(&da, &dc)?;
                    tally();
                }
                BenchOp::Orthogonalize => {
                    topo.orthogonalize(&da)?;
                    tally();
                }
                BenchOp::Truncate => {
                    topo.truncate(&da, &ctl)?;
                    tally();
                }
                BenchOp::ApplyOperator => {
                    let dop = topo.scatter_operator(op.as_ref().unwrap())?;
                    topo.apply_operator(&dop, &da)?;
                    tally();
                }
                BenchOp::Add => {
                    let dc = topo.scatter(&c)?;
                    topo.add(&da, &dc)?;
                    tally();
                }
            }
            Ok((crit, wall))
        }
    }
}

/// Least-squares line `y = intercept + slope·x` with its coefficient of
/// determination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub r2: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(HtError::Config("a line fit needs at least two matching points".into()));
    }
    let m = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(HtError::Config("line fit with a single abscissa".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit { intercept: my - slope * mx, slope, r2 })
}

/// Fit of `t = a + b·log₂ d`.
pub fn fit_log2(ds: &[usize], t: &[f64]) -> Result<LinearFit> {
    fit_line(&ds.iter().map(|&d| (d as f64).log2()).collect::<Vec<_>>(), t)
}

/// Exponent `p` of `t ∝ k^p` from a log-log fit.
pub fn fit_power(ks: &[usize], t: &[f64]) -> Result<LinearFit> {
    if t.iter().any(|&v| v <= 0.0) {
        return Err(HtError::Config("power fit needs positive times".into()));
    }
    fit_line(&ks.iter().map(|&k| (k as f64).ln()).collect::<Vec<_>>(), &t.iter().map(|v| v.ln()).collect::<Vec<_>>())
}

/// Median time per distinct value of `key` in first-seen order.
pub fn medians_by(rows: &[BenchRow], key: impl Fn(&BenchRow) -> usize) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for r in rows {
        if !out.iter().any(|(k, _)| *k == key(r)) {
            out.push((key(r), r.median_seconds));
        }
    }
    out
}
