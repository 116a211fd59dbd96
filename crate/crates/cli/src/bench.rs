use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use clap::Args;
use htensor::bench::{fit_log2, fit_power, medians_by, run_bench, BenchBackend, BenchOp, BenchRow, BenchSpec, LeafSize, DEFAULT_MEMORY_LIMIT};
use serde::Serialize;

use crate::{meta, BackendArg, RunArgs};

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// evaluate, inner_product, orthogonalize, truncate, apply_operator or add.
    #[arg(long)]
    pub op: BenchOp,
    #[arg(long, value_delimiter = ',', default_values_t = [8, 16, 32, 64, 128, 256])]
    pub d: Vec<usize>,
    /// Leaf size; `0` uses the rank of each case.
    #[arg(long, default_value_t = 1024)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [30])]
    pub k: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    /// Operator rank for apply_operator; `0` uses the tensor rank.
    #[arg(long, default_value_t = 2)]
    pub op_rank: usize,
    /// Entries per timed evaluate sample.
    #[arg(long, default_value_t = 20)]
    pub evals: usize,
    #[command(flatten)]
    pub run: RunArgs,
}

impl BenchArgs {
    pub fn spec(&self) -> BenchSpec {
        BenchSpec {
            op: self.op,
            ds: self.d.clone(),
            n: if self.n == 0 { LeafSize::MatchRank } else { LeafSize::Fixed(self.n) },
            ks: self.k.clone(),
            reps: self.reps,
            backend: match self.run.backend {
                BackendArg::Serial => BenchBackend::Serial,
                BackendArg::Dist => BenchBackend::Dist,
            },
            seed: self.run.seed,
            op_rank: (self.op_rank > 0).then_some(self.op_rank),
            evals: self.evals,
        }
    }
}

pub const FIT_HEADER: &str = "op,variable,model,intercept,slope,r2,slope_over_mean";

/// CSV writer that emits `header` even when no rows follow.
fn writer(path: &Path, header: &str) -> Result<csv::Writer<File>> {
    let mut f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    writeln!(f, "{header}")?;
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(f))
}

#[derive(Serialize)]
struct FitRow {
    op: BenchOp,
    variable: &'static str,
    model: &'static str,
    intercept: f64,
    slope: f64,
    r2: f64,
    slope_over_mean: f64,
}

pub fn run(args: &BenchArgs) -> Result<()> {
    let spec = args.spec();
    meta::record(&args.run.out, "bench", spec.seed, &spec)?;
    let limit = (!args.run.force).then_some(DEFAULT_MEMORY_LIMIT);
    let rows = run_bench(&spec, limit).context("benchmark refused or failed (pass --force to lift the memory guard)")?;

    let mut w = writer(&args.run.out.join("bench.csv"), BenchRow::CSV_HEADER)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;

    let mut fits = Vec::new();
    if spec.ds.len() >= 2 && spec.ks.len() == 1 {
        let m = medians_by(&rows, |r| r.d);
        let t: Vec<f64> = m.iter().map(|x| x.1).collect();
        let f = fit_log2(&spec.ds, &t)?;
        let mean = t.iter().sum::<f64>() / t.len() as f64;
        fits.push(FitRow { op: spec.op, variable: "d", model: "a+b*log2(d)", intercept: f.intercept, slope: f.slope, r2: f.r2, slope_over_mean: f.slope / mean });
    }
    if spec.ks.len() >= 2 && spec.ds.len() == 1 {
        let t: Vec<f64> = medians_by(&rows, |r| r.k).iter().map(|x| x.1).collect();
        let f = fit_power(&spec.ks, &t)?;
        fits.push(FitRow { op: spec.op, variable: "k", model: "log(t)=a+b*log(k)", intercept: f.intercept, slope: f.slope, r2: f.r2, slope_over_mean: f64::NAN });
    }
    let mut w = writer(&args.run.out.join("fits.csv"), FIT_HEADER)?;
    for f in &fits {
        w.serialize(f)?;
        eprintln!("{} vs {}: slope {:.4e}, R² {:.3}", f.op, f.variable, f.slope, f.r2);
    }
    w.flush()?;
    Ok(())
}
