use std::fs::{self, File};
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use htensor::bench::DEFAULT_MEMORY_LIMIT;
use htensor::cookie::{CookieProblem, ProblemConfig};
use htensor::dist::WorkerTopology;
use htensor::htucker::storage_size_for;
use htensor::solvers::{cg_solve, multigrid_solve, Backend, ConvergenceTrace, Serial};
use htensor::RankVector;
use serde::Serialize;

use crate::{meta, BackendArg, RunArgs};

pub const TRACE_HEADER: &str = "cap,step,true_rel_residual,internal_residual,max_rank,seconds";
pub const SUMMARY_HEADER: &str = "cap,steps,floor,final_residual,max_rank,seconds,status";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Cg,
    Mg,
}

#[derive(Args, Debug)]
pub struct CookieArgs {
    /// JSON problem description; omitted fields take their defaults.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub caps: Option<Vec<usize>>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Finest grid level (0 is the 6×6 grid).
    #[arg(long)]
    pub levels: Option<usize>,
    /// Grid points per parameter.
    #[arg(long)]
    pub points: Option<usize>,
    /// CG steps, or V-cycles for cookie-mg.
    #[arg(long)]
    pub steps: Option<usize>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Serialize)]
struct RunConfig<'a> {
    method: Method,
    backend: String,
    problem: &'a ProblemConfig,
}

impl CookieArgs {
    pub fn config(&self, method: Method) -> Result<ProblemConfig> {
        let mut c = match &self.problem {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => ProblemConfig::default(),
        };
        if let Some(v) = &self.caps {
            c.caps = v.clone();
        }
        if let Some(v) = self.eps {
            c.eps = v;
        }
        if let Some(v) = self.levels {
            c.max_level = v;
        }
        if let Some(v) = self.points {
            c.points_per_parameter = v;
        }
        if let Some(v) = self.steps {
            match method {
                Method::Cg => c.cg_steps = v,
                Method::Mg => c.mg_cycles = v,
            }
        }
        if c.caps.is_empty() {
            bail!("no rank caps given");
        }
        c.validate()?;
        Ok(c)
    }
}

/// Peak bytes of one cap: iterate, residual and search direction at the
/// cap plus one operator product.
pub fn predicted_bytes(problem: &CookieProblem, cap: usize) -> Result<u64> {
    let l = problem.num_levels() - 1;
    let tree = problem.tree();
    let sizes = problem.sizes(l)?;
    let op = problem.operator(l)?;
    let x = RankVector::uniform(tree, cap).clamped(tree, &sizes);
    let prod = RankVector::new(tree, (0..tree.num_nodes()).map(|t| x.get(t) * op.rank(t)).collect())?;
    let words = 3 * storage_size_for(tree, &sizes, &x) + storage_size_for(tree, &sizes, &prod);
    Ok(8 * words as u64)
}

fn solve<B: Backend>(be: &B, problem: &CookieProblem, method: Method, cap: usize) -> htensor::Result<ConvergenceTrace> {
    let cfg = problem.solver_config(cap);
    let finest = problem.num_levels() - 1;
    let b = be.load(&problem.rhs_tensor(finest)?)?;
    Ok(match method {
        Method::Cg => cg_solve(be, &be.load_operator(&problem.operator(finest)?)?, &b, &cfg)?.trace,
        Method::Mg => {
            let h = problem.hierarchy(be, &cfg)?;
            multigrid_solve(be, &h, &b, &cfg, problem.config().mg_cycles)?.trace
        }
    })
}

fn solve_with_backend(problem: &CookieProblem, method: Method, cap: usize, backend: BackendArg) -> htensor::Result<ConvergenceTrace> {
    match backend {
        BackendArg::Serial => solve(&Serial, problem, method, cap),
        // A fresh topology per cap keeps one failure from poisoning the rest.
        BackendArg::Dist => solve(&WorkerTopology::spawn(problem.tree().clone())?, problem, method, cap),
    }
}

pub fn run(args: &CookieArgs, method: Method) -> Result<()> {
    let config = args.config(method)?;
    let name = match method {
        Method::Cg => "cookie-cg",
        Method::Mg => "cookie-mg",
    };
    let run_cfg = RunConfig { method, backend: format!("{:?}", args.run.backend).to_lowercase(), problem: &config };
    meta::record(&args.run.out, name, args.run.seed, &run_cfg)?;
    let problem = CookieProblem::new(config.clone())?;
    if !args.run.force {
        for &cap in &config.caps {
            let bytes = predicted_bytes(&problem, cap)?;
            if bytes > DEFAULT_MEMORY_LIMIT {
                bail!("cap {cap} needs about {bytes} bytes, above the {DEFAULT_MEMORY_LIMIT}-byte guard rail; pass --force to run anyway");
            }
        }
    }

    let mut traces = File::create(args.run.out.join("traces.csv"))?;
    let mut summary = File::create(args.run.out.join("summary.csv"))?;
    writeln!(traces, "{TRACE_HEADER}")?;
    writeln!(summary, "{SUMMARY_HEADER}")?;
    for &cap in &config.caps {
        eprintln!("{name}: cap {cap}");
        match solve_with_backend(&problem, method, cap, args.run.backend) {
            Ok(trace) => {
                for e in &trace.entries {
                    writeln!(traces, "{cap},{},{:e},{:e},{},{:.6}", e.step, e.true_rel_residual, e.internal_residual, e.max_rank, e.seconds)?;
                }
                let last = trace.last().copied();
                let status = match &trace.breakdown {
                    Some(msg) => format!("breakdown: {msg}"),
                    None => "ok".into(),
                };
                writeln!(
                    summary,
                    "{cap},{},{:e},{:e},{},{:.6},{}",
                    trace.len().saturating_sub(1),
                    trace.floor(),
                    last.map_or(f64::NAN, |e| e.true_rel_residual),
                    trace.entries.iter().map(|e| e.max_rank).max().unwrap_or(0),
                    last.map_or(0.0, |e| e.seconds),
                    csv_field(&status)
                )?;
                eprintln!("{name}: cap {cap} floor {:.3e}", trace.floor());
            }
            Err(e) => {
                eprintln!("{name}: cap {cap} failed: {e}");
                writeln!(summary, "{cap},0,NaN,NaN,0,0,{}", csv_field(&format!("error: {e}")))?;
            }
        }
        traces.flush()?;
        summary.flush()?;
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
