use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::Subcommand;
use htensor::arith::{self, TruncationControl};
use htensor::{DimensionTree, HTensor, RankVector};
use serde::Serialize;

#[derive(Subcommand, Debug)]
pub enum TensorCommand {
    /// Print order, sizes, ranks, storage and norm as JSON.
    Info {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Rewrite a tensor, optionally orthogonalized or truncated.
    Convert {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Truncate to this uniform rank.
        #[arg(long, conflicts_with = "eps")]
        k: Option<usize>,
        /// Truncate to this absolute accuracy.
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        orthogonalize: bool,
    },
    /// Write a seeded random tensor with uniform sizes and ranks.
    Random {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Serialize)]
struct Info<'a> {
    d: usize,
    sizes: &'a [usize],
    ranks: &'a [usize],
    storage_size: usize,
    file_bytes: usize,
    orthogonal: bool,
    norm: f64,
}

fn read(path: &Path) -> Result<HTensor> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    HTensor::read_from(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn write(a: &HTensor, path: &Path) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    a.write_to(BufWriter::new(f)).with_context(|| format!("writing {}", path.display()))
}

pub fn run(cmd: &TensorCommand) -> Result<()> {
    match cmd {
        TensorCommand::Info { input } => {
            let a = read(input)?;
            let ranks = a.ranks();
            let info = Info {
                d: a.d(),
                sizes: a.sizes(),
                ranks: ranks.as_slice(),
                storage_size: a.storage_size(),
                file_bytes: a.serialized_len(),
                orthogonal: a.is_orthogonal(),
                norm: arith::norm(&a),
            };
            println!("{}", serde_json::to_string_pretty(&info)?);
        }
        TensorCommand::Convert { input, out, k, eps, orthogonalize } => {
            let mut a = read(input)?;
            if *orthogonalize {
                a = arith::orthogonalize(&a);
            }
            let ctl = match (k, eps) {
                (Some(k), _) => Some(TruncationControl::uniform(*k)),
                (None, Some(e)) => Some(TruncationControl::accuracy(*e, None)),
                (None, None) => None,
            };
            if let Some(ctl) = ctl {
                a = arith::truncate(&a, &ctl)?;
            }
            write(&a, out)?;
        }
        TensorCommand::Random { d, n, k, seed, out } => {
            if *n == 0 || *k == 0 {
                bail!("n and k must be positive");
            }
            let tree = Arc::new(DimensionTree::balanced(*d)?);
            let sizes = vec![*n; *d];
            let ranks = RankVector::uniform(&tree, *k).clamped(&tree, &sizes);
            write(&HTensor::random(tree, &sizes, &ranks, *seed)?, out)?;
        }
    }
    Ok(())
}
