//! `htensor`: benchmarks and cookie-problem solver runs as CSV artifacts.

mod bench;
mod cookie;
mod meta;
mod tensor;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "htensor", version, about = "Hierarchical Tucker arithmetic benchmarks and solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time one HT operation over a grid of orders and ranks.
    Bench(bench::BenchArgs),
    /// Truncated CG on the cookie problem, one trace per rank cap.
    CookieCg(cookie::CookieArgs),
    /// Multigrid V-cycles on the cookie problem, one trace per rank cap.
    CookieMg(cookie::CookieArgs),
    /// Inspect or rewrite serialized tensors.
    #[command(subcommand)]
    Tensor(tensor::TensorCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum BackendArg {
    #[default]
    Serial,
    Dist,
}

/// Options shared by the experiment commands.
#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Output directory; created if missing.
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = BackendArg::Serial)]
    pub backend: BackendArg,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Run even if the predicted allocation exceeds the 2 GiB guard rail.
    #[arg(long)]
    pub force: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench(a) => bench::run(&a),
        Command::CookieCg(a) => cookie::run(&a, cookie::Method::Cg),
        Command::CookieMg(a) => cookie::run(&a, cookie::Method::Mg),
        Command::Tensor(c) => tensor::run(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
