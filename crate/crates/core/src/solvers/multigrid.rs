use std::time::Instant;

use super::{cg_solve, residual_norm, richardson_step, Backend, ConvergenceTrace, SolveOutcome, SolverConfig, TraceEntry};
use crate::error::{HtError, Result};
use crate::htucker::GeneralizedMatrix;

/// One grid of a semi-coarsening hierarchy.
pub struct MgLevel<O> {
    pub op: O,
    pub omega: f64,
    /// Map to the next coarser level and back; `None` on the coarsest.
    pub transfer: Option<(GeneralizedMatrix, GeneralizedMatrix)>,
}

/// Levels ordered coarsest first. Grid transfers act on one tensor
/// dimension only.
pub struct Hierarchy<O> {
    pub levels: Vec<MgLevel<O>>,
    pub dim: usize,
}

impl<O> Hierarchy<O> {
    pub fn finest(&self) -> usize {
        self.levels.len() - 1
    }
}

/// One V-cycle on `level`: CG on the coarsest grid, otherwise smoothing
/// around a recursive coarse correction. A coarse CG breakdown is an error.
pub fn multigrid_step<B: Backend>(
    be: &B,
    h: &Hierarchy<B::Operator>,
    level: usize,
    x: B::Tensor,
    b: &B::Tensor,
    cfg: &SolverConfig,
) -> Result<B::Tensor> {
    let lv = h.levels.get(level).ok_or_else(|| HtError::Config(format!("level {level} not in the hierarchy")))?;
    let ctl = &cfg.truncation;
    let Some((restrict, prolong)) = &lv.transfer else {
        let coarse = SolverConfig { record_true_residual: false, ..cfg.clone() };
        let out = cg_solve(be, &lv.op, b, &coarse)?;
        return match out.trace.breakdown {
            Some(msg) => Err(HtError::Breakdown(format!("coarse solve: {msg}"))),
            None => Ok(out.x),
        };
    };
    let mut x = x;
    for _ in 0..cfg.pre_smoothing {
        x = richardson_step(be, &lv.op, &x, b, lv.omega, ctl)?;
    }
    let r = be.truncate(&be.axpy(-1.0, &be.apply(&lv.op, &x)?, b)?, ctl)?;
    let d = be.map_leaf(&r, h.dim, restrict)?;
    let e = multigrid_step(be, h, level - 1, be.copy(&d)?, &d, cfg)?;
    let p = be.map_leaf(&e, h.dim, prolong)?;
    x = be.truncate(&be.add(&x, &p)?, ctl)?;
    for _ in 0..cfg.post_smoothing {
        x = richardson_step(be, &lv.op, &x, b, lv.omega, ctl)?;
    }
    Ok(x)
}

/// `cycles` V-cycles on the finest level from `X_0 = B`, recording the true
/// residual after each. A breakdown stops the run and keeps the last iterate.
pub fn multigrid_solve<B: Backend>(
    be: &B,
    h: &Hierarchy<B::Operator>,
    b: &B::Tensor,
    cfg: &SolverConfig,
    cycles: usize,
) -> Result<SolveOutcome<B::Tensor>> {
    cfg.validate()?;
    let start = Instant::now();
    let top = h.finest();
    let op = &h.levels[top].op;
    let b_norm = be.norm(b)?.max(f64::MIN_POSITIVE);
    let entry = |x: &B::Tensor, step: usize| -> Result<TraceEntry> {
        let res = residual_norm(be, op, x, b)? / b_norm;
        Ok(TraceEntry { step, true_rel_residual: res, internal_residual: res * b_norm, max_rank: be.max_rank(x), seconds: start.elapsed().as_secs_f64() })
    };
    let mut x = be.copy(b)?;
    let mut trace = ConvergenceTrace::default();
    trace.entries.push(entry(&x, 0)?);
    for c in 1..=cycles {
        match multigrid_step(be, h, top, be.copy(&x)?, b, cfg) {
            Ok(next) => x = next,
            Err(HtError::Breakdown(msg)) => {
                trace.breakdown = Some(format!("cycle {c}: {msg}"));
                break;
            }
            Err(e) => return Err(e),
        }
        trace.entries.push(entry(&x, c)?);
    }
    Ok(SolveOutcome { x, trace })
}
