//! Iterative solvers in truncated HT arithmetic, generic over the backend.

mod backend;
mod multigrid;

use std::io::Write;
use std::time::Instant;

pub use backend::{Backend, Serial};
pub use multigrid::{multigrid_solve, multigrid_step, Hierarchy, MgLevel};

use crate::arith::TruncationControl;
use crate::error::{HtError, Result};

/// Damping for Richardson smoothing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Omega {
    Fixed(f64),
    /// `2 / (λ_min + λ_max)` from the configured spectral bounds.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub truncation: TruncationControl,
    /// Absolute bound on the internal residual norm that ends CG.
    pub eps_stop: f64,
    pub max_cg_steps: usize,
    pub pre_smoothing: usize,
    pub post_smoothing: usize,
    pub omega: Omega,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    /// Recompute `‖AX_j − B‖` after every step. Costs one extra operator
    /// application and orthogonalization per step.
    pub record_true_residual: bool,
    pub power_tol: f64,
    pub power_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            truncation: TruncationControl::accuracy(1e-4, None),
            eps_stop: 1e-10,
            max_cg_steps: 25,
            pre_smoothing: 5,
            post_smoothing: 5,
            omega: Omega::Auto,
            lambda_min: None,
            lambda_max: None,
            record_true_residual: true,
            power_tol: 1e-2,
            power_max_iter: 200,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        self.truncation.validate()?;
        if !(self.eps_stop >= 0.0) || !(self.power_tol > 0.0) {
            return Err(HtError::Config("stopping thresholds must be non-negative".into()));
        }
        if let Omega::Fixed(w) = self.omega {
            if !(w.is_finite() && w > 0.0) {
                return Err(HtError::Config(format!("omega {w} must be positive")));
            }
        }
        Ok(())
    }

    pub fn resolve_omega(&self) -> Result<f64> {
        match (self.omega, self.lambda_min, self.lambda_max) {
            (Omega::Fixed(w), _, _) => Ok(w),
            (Omega::Auto, Some(lo), Some(hi)) if lo > 0.0 && hi >= lo => Ok(2.0 / (lo + hi)),
            (Omega::Auto, lo, hi) => Err(HtError::Config(format!("automatic omega needs 0 < λ_min ≤ λ_max, got {lo:?} and {hi:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub step: usize,
    /// `‖AX_j − B‖ / ‖B‖`, recomputed from the iterate; NaN when disabled.
    pub true_rel_residual: f64,
    /// Norm of the recursively updated residual (CG) or of the smoothed
    /// residual estimate (multigrid, where it equals the true value).
    pub internal_residual: f64,
    pub max_rank: usize,
    /// Seconds since the solve started.
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTrace {
    pub entries: Vec<TraceEntry>,
    /// Set when the iteration stopped early; the message says why.
    pub breakdown: Option<String>,
}

impl ConvergenceTrace {
    pub const CSV_HEADER: &'static str = "step,true_rel_residual,internal_residual,max_rank,seconds";

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Smallest recorded true relative residual.
    pub fn floor(&self) -> f64 {
        self.entries.iter().map(|e| e.true_rel_residual).filter(|v| !v.is_nan()).fold(f64::INFINITY, f64::min)
    }

    pub fn last(&self) -> Option<&TraceEntry> {
        self.entries.last()
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for e in &self.entries {
            writeln!(w, "{},{:e},{:e},{},{:.6}", e.step, e.true_rel_residual, e.internal_residual, e.max_rank, e.seconds)?;
        }
        Ok(())
    }
}

/// Result of an iterative solve. On breakdown `x` is the iterate with the
/// smallest recorded true residual.
pub struct SolveOutcome<T> {
    pub x: T,
    pub trace: ConvergenceTrace,
}

/// `‖A x − b‖`, orthogonalizing first so that cancellation inside the
/// difference does not swamp small residuals.
pub fn residual_norm<B: Backend>(be: &B, op: &B::Operator, x: &B::Tensor, b: &B::Tensor) -> Result<f64> {
    let r = be.axpy(-1.0, b, &be.apply(op, x)?)?;
    be.norm(&be.orthogonalize(&r)?)
}

struct Recorder {
    start: Instant,
    b_norm: f64,
    enabled: bool,
}

impl Recorder {
    fn entry<B: Backend>(&self, be: &B, op: &B::Operator, x: &B::Tensor, b: &B::Tensor, step: usize, internal: f64) -> Result<TraceEntry> {
        let true_rel_residual = if self.enabled { residual_norm(be, op, x, b)? / self.b_norm } else { f64::NAN };
        Ok(TraceEntry { step, true_rel_residual, internal_residual: internal, max_rank: be.max_rank(x), seconds: self.start.elapsed().as_secs_f64() })
    }
}

/// Truncated conjugate gradients started from `X_0 = B`, truncating after
/// every operator application and every update. Non-positive curvature
/// `⟨D_j, A D_j⟩` ends the iteration with a breakdown note.
pub fn cg_solve<B: Backend>(be: &B, op: &B::Operator, b: &B::Tensor, cfg: &SolverConfig) -> Result<SolveOutcome<B::Tensor>> {
    cfg.validate()?;
    let ctl = &cfg.truncation;
    let rec = Recorder { start: Instant::now(), b_norm: be.norm(b)?.max(f64::MIN_POSITIVE), enabled: cfg.record_true_residual };
    let mut x = be.copy(b)?;
    let mut r = be.truncate(&be.axpy(-1.0, &be.apply(op, &x)?, b)?, ctl)?;
    let mut d = be.copy(&r)?;
    let mut rr = be.inner(&r, &r)?;
    let mut trace = ConvergenceTrace::default();
    trace.entries.push(rec.entry(be, op, &x, b, 0, rr.max(0.0).sqrt())?);
    let mut best: Option<(f64, B::Tensor)> = None;
    let mut j = 0;
    while rr.max(0.0).sqrt() > cfg.eps_stop && j < cfg.max_cg_steps {
        let z = be.truncate(&be.apply(op, &d)?, ctl)?;
        let dz = be.inner(&d, &z)?;
        if !(dz > 0.0) {
            trace.breakdown = Some(format!("step {}: <D, AD> = {dz:e} is not positive", j + 1));
            break;
        }
        let alpha = rr / dz;
        let x_next = be.truncate(&be.axpy(alpha, &d, &x)?, ctl)?;
        let r_next = be.truncate(&be.axpy(-alpha, &z, &r)?, ctl)?;
        let rr_next = be.inner(&r_next, &r_next)?;
        let beta = rr_next / rr;
        d = be.truncate(&be.axpy(beta, &d, &r_next)?, ctl)?;
        let prev = std::mem::replace(&mut x, x_next);
        let prev_res = trace.entries.last().map(|e| e.true_rel_residual).unwrap_or(f64::NAN);
        if best.as_ref().is_none_or(|(v, _)| prev_res < *v) {
            best = Some((prev_res, prev));
        }
        r = r_next;
        rr = rr_next;
        j += 1;
        trace.entries.push(rec.entry(be, op, &x, b, j, rr.max(0.0).sqrt())?);
    }
    if trace.breakdown.is_some() {
        if let Some((v, bx)) = best {
            if v < trace.entries.last().unwrap().true_rel_residual {
                x = bx;
            }
        }
    }
    Ok(SolveOutcome { x, trace })
}

/// One damped Richardson step `X ← T(X − ω·T(T(AX) − B))`.
pub fn richardson_step<B: Backend>(be: &B, op: &B::Operator, x: &B::Tensor, b: &B::Tensor, omega: f64, ctl: &TruncationControl) -> Result<B::Tensor> {
    let z = be.truncate(&be.apply(op, x)?, ctl)?;
    let z = be.truncate(&be.axpy(-1.0, b, &z)?, ctl)?;
    be.truncate(&be.axpy(-omega, &z, x)?, ctl)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerEstimate {
    pub lambda: f64,
    pub iterations: usize,
    /// False when the iteration cap was reached first.
    pub converged: bool,
}

/// Largest eigenvalue by truncated power iteration with Rayleigh quotients,
/// stopping when successive estimates agree to `cfg.power_tol` relative.
pub fn power_iteration_lambda_max<B: Backend>(be: &B, op: &B::Operator, start: &B::Tensor, cfg: &SolverConfig) -> Result<PowerEstimate> {
    cfg.validate()?;
    let n0 = be.norm(start)?;
    if !(n0 > 0.0) {
        return Err(HtError::Config("power iteration needs a non-zero start tensor".into()));
    }
    let mut x = be.scale(start, 1.0 / n0)?;
    let mut prev = f64::NAN;
    for it in 1..=cfg.power_max_iter {
        let y = be.apply(op, &x)?;
        let lambda = be.inner(&x, &y)? / be.inner(&x, &x)?;
        if (lambda - prev).abs() <= cfg.power_tol * lambda.abs() {
            return Ok(PowerEstimate { lambda, iterations: it, converged: true });
        }
        prev = lambda;
        let y = be.truncate(&y, &cfg.truncation)?;
        let ny = be.norm(&y)?;
        if !(ny > 0.0) {
            return Ok(PowerEstimate { lambda, iterations: it, converged: false });
        }
        x = be.scale(&y, 1.0 / ny)?;
    }
    Ok(PowerEstimate { lambda: prev, iterations: cfg.power_max_iter, converged: false })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::htucker::{GeneralizedMatrix, HTOperator, HTensor, OperatorNode, RankVector, DEFAULT_DENSE_CAP};
    use crate::kernels::{sym_eig_desc, Matrix, Tensor3};
    use crate::tree::DimensionTree;

    fn spd(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let m = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        m.t_matmul(&m).add(&Matrix::identity(n).scaled(0.5)).unwrap()
    }

    /// `K_1 ⊗ I + I ⊗ K_2` on a two-leaf tree.
    fn kron_sum(sizes: [usize; 2], seed: u64) -> HTOperator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = Arc::new(DimensionTree::balanced(2).unwrap());
        let mut h = Tensor3::zeros([1, 2, 2]);
        h.set(0, 0, 1, 1.0);
        h.set(0, 1, 0, 1.0);
        let leaf = |n: usize, rng: &mut ChaCha8Rng| OperatorNode::Leaf(vec![GeneralizedMatrix::Dense(spd(n, rng)), GeneralizedMatrix::identity(n)]);
        let (l1, l2) = (leaf(sizes[0], &mut rng), leaf(sizes[1], &mut rng));
        HTOperator::from_parts(tree, vec![OperatorNode::Transfer(h), l1, l2]).unwrap()
    }

    fn rhs(sizes: [usize; 2], seed: u64) -> HTensor {
        let tree = Arc::new(DimensionTree::balanced(2).unwrap());
        let r = RankVector::uniform(&tree, 2).clamped(&tree, &sizes);
        HTensor::random(tree, &sizes, &r, seed).unwrap()
    }

    fn exact() -> SolverConfig {
        SolverConfig { truncation: TruncationControl::accuracy(1e-14, None), eps_stop: 0.0, ..SolverConfig::default() }
    }

    fn vec_norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn identity_converges_immediately() {
        let b = rhs([3, 4], 1);
        let id = HTOperator::identity(b.tree().clone(), b.sizes()).unwrap();
        let out = cg_solve(&Serial, &id, &b, &SolverConfig::default()).unwrap();
        assert!(out.trace.entries[0].true_rel_residual <= 1e-14);
        assert!(out.trace.breakdown.is_none());
        assert_eq!(out.x, b);
    }

    #[test]
    fn cg_matches_dense_cg_step_by_step() {
        let sizes = [4, 3];
        let op = kron_sum(sizes, 2);
        let b = rhs(sizes, 3);
        let a = op.to_dense_matrix(1000).unwrap();
        let bv = b.to_dense(DEFAULT_DENSE_CAP).unwrap().data().to_vec();
        // Plain dense CG from x = b.
        let mut x = bv.clone();
        let ax = a.matvec(&x);
        let mut r: Vec<f64> = bv.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let mut d = r.clone();
        let mut dense_res = vec![vec_norm(&r) / vec_norm(&bv)];
        for _ in 0..12 {
            let rr: f64 = r.iter().map(|v| v * v).sum();
            if rr.sqrt() == 0.0 {
                break;
            }
            let z = a.matvec(&d);
            let alpha = rr / d.iter().zip(&z).map(|(p, q)| p * q).sum::<f64>();
            x.iter_mut().zip(&d).for_each(|(xi, di)| *xi += alpha * di);
            r.iter_mut().zip(&z).for_each(|(ri, zi)| *ri -= alpha * zi);
            let beta = r.iter().map(|v| v * v).sum::<f64>() / rr;
            d = d.iter().zip(&r).map(|(di, ri)| beta * di + ri).collect();
            let ax = a.matvec(&x);
            dense_res.push(vec_norm(&bv.iter().zip(&ax).map(|(p, q)| p - q).collect::<Vec<_>>()) / vec_norm(&bv));
        }
        let cfg = SolverConfig { max_cg_steps: 12, ..exact() };
        let out = cg_solve(&Serial, &op, &b, &cfg).unwrap();
        for (e, want) in out.trace.entries.iter().zip(&dense_res) {
            if *want > 1e-7 {
                assert!((e.true_rel_residual - want).abs() <= 1e-9, "step {}: {} vs {want}", e.step, e.true_rel_residual);
            }
        }
        let sol = crate::kernels::solve(&a, &bv).unwrap();
        let got = out.x.to_dense(DEFAULT_DENSE_CAP).unwrap();
        let err: Vec<f64> = got.data().iter().zip(&sol).map(|(p, q)| p - q).collect();
        assert!(vec_norm(&err) <= 1e-8 * vec_norm(&sol));
    }

    #[test]
    fn richardson_exact_identity_step() {
        let b = rhs([3, 3], 4);
        let x0 = rhs([3, 3], 5);
        let id = HTOperator::identity(b.tree().clone(), b.sizes()).unwrap();
        let x1 = richardson_step(&Serial, &id, &x0, &b, 1.0, &TruncationControl::accuracy(1e-14, None)).unwrap();
        let diff = x1.to_dense(DEFAULT_DENSE_CAP).unwrap().sub(&b.to_dense(DEFAULT_DENSE_CAP).unwrap());
        assert!(diff.norm() <= 1e-13);
    }

    #[test]
    fn richardson_contracts_at_optimal_omega() {
        let sizes = [4, 4];
        let op = kron_sum(sizes, 6);
        let b = rhs(sizes, 7);
        let a = op.to_dense_matrix(1000).unwrap();
        let (lam, _) = sym_eig_desc(&a).unwrap();
        let (hi, lo) = (lam[0], lam[lam.len() - 1]);
        let rho = (hi - lo) / (hi + lo);
        let bv = b.to_dense(DEFAULT_DENSE_CAP).unwrap();
        let sol = crate::kernels::solve(&a, bv.data()).unwrap();
        let err = |x: &HTensor| vec_norm(&x.to_dense(DEFAULT_DENSE_CAP).unwrap().data().iter().zip(&sol).map(|(p, q)| p - q).collect::<Vec<_>>());
        let ctl = TruncationControl::accuracy(1e-14, None);
        let mut x = b.clone();
        for _ in 0..10 {
            let next = richardson_step(&Serial, &op, &x, &b, 2.0 / (hi + lo), &ctl).unwrap();
            assert!(err(&next) <= rho * err(&x) + 1e-12);
            x = next;
        }
        let cfg = SolverConfig { lambda_min: Some(lo), lambda_max: Some(hi), ..SolverConfig::default() };
        assert!((cfg.resolve_omega().unwrap() - 2.0 / (hi + lo)).abs() < 1e-15);
        assert!(SolverConfig::default().resolve_omega().is_err());
    }

    #[test]
    fn power_iteration_estimates() {
        let b = rhs([3, 4], 8);
        let id = HTOperator::identity(b.tree().clone(), b.sizes()).unwrap();
        let est = power_iteration_lambda_max(&Serial, &id, &b, &exact()).unwrap();
        assert!((est.lambda - 1.0).abs() <= 1e-6 && est.converged);

        let op = kron_sum([4, 4], 9);
        let (lam, _) = sym_eig_desc(&op.to_dense_matrix(1000).unwrap()).unwrap();
        let cfg = SolverConfig { power_tol: 1e-6, ..exact() };
        let est = power_iteration_lambda_max(&Serial, &op, &rhs([4, 4], 10), &cfg).unwrap();
        assert!((est.lambda - lam[0]).abs() <= 0.01 * lam[0], "{} vs {}", est.lambda, lam[0]);
    }

    #[test]
    fn trace_csv_layout() {
        let b = rhs([3, 4], 11);
        let out = cg_solve(&Serial, &kron_sum([3, 4], 12), &b, &SolverConfig { max_cg_steps: 3, ..exact() }).unwrap();
        let mut buf = Vec::new();
        out.trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], ConvergenceTrace::CSV_HEADER);
        assert_eq!(lines.len(), out.trace.len() + 1);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 5));
    }

    #[test]
    fn one_level_multigrid_is_cg() {
        let sizes = [4, 3];
        let op = kron_sum(sizes, 13);
        let b = rhs(sizes, 14);
        let cfg = SolverConfig { truncation: TruncationControl::accuracy(1e-6, Some(2)), max_cg_steps: 6, ..SolverConfig::default() };
        let h = Hierarchy { levels: vec![MgLevel { op: op.clone(), omega: 0.1, transfer: None }], dim: 1 };
        let mg = multigrid_step(&Serial, &h, 0, b.clone(), &b, &cfg).unwrap();
        let cg = cg_solve(&Serial, &op, &b, &cfg).unwrap();
        assert_eq!(mg, cg.x);
        let run = multigrid_solve(&Serial, &h, &b, &cfg, 1).unwrap();
        assert_eq!(run.x, cg.x);
        assert_eq!(run.trace.entries[1].true_rel_residual, cg.trace.last().unwrap().true_rel_residual);
    }

    #[test]
    fn breakdown_is_reported() {
        // An indefinite operator makes the curvature negative at the first step.
        let b = rhs([3, 3], 15);
        let neg = HTOperator::identity(b.tree().clone(), b.sizes()).unwrap().map_leaf(0, |m| m.scaled(-1.0)).unwrap();
        // X_0 = B gives R_0 = 2B and <R_0, A R_0> < 0.
        let out = cg_solve(&Serial, &neg, &b, &SolverConfig::default()).unwrap();
        assert!(out.trace.breakdown.is_some());
        assert_eq!(out.trace.len(), 1);
    }
}
