//! `routeimprove`: generate instances, train policies, solve and compare.

mod bench;
mod failure;
mod gen;
mod gradcheck;
mod manifest;
mod problems;
mod solve;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use failure::CliResult;

#[derive(Debug, Parser)]
#[command(name = "routeimprove", version, about = "Learned pairwise improvement heuristics for TSP and CVRP")]
struct Cli {
    /// Directory holding the instance cache.
    #[arg(long, global = true, env = "ROUTEIMPROVE_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,

    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate random instances.
    Gen(gen::GenArgs),
    /// Train an actor and a critic.
    Train(train::TrainArgs),
    /// Improve solutions with a learned or hand-crafted policy.
    Solve(solve::SolveArgs),
    /// Compare learned and hand-crafted policies at matched step limits.
    Bench(bench::BenchArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(gradcheck::GradcheckArgs),
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(failure::Failure::config("--jobs must be at least 1"));
        }
        routeimprove::par::set_threads(jobs);
    }
    match cli.command {
        Command::Gen(a) => gen::run(a, &cli.data_dir),
        Command::Train(a) => train::run(a),
        Command::Solve(a) => solve::run(a, &cli.data_dir),
        Command::Bench(a) => bench::run(a, &cli.data_dir),
        Command::Gradcheck(a) => gradcheck::run(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
