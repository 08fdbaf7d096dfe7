use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::Args;
use rand::Rng;
use routeimprove::io::{write_results, ResultRecord};
use routeimprove::net::checkpoint::Checkpoint;
use routeimprove::par;
use routeimprove::routing::Operator;
use routeimprove::search::{multi_policy, multi_run, run_many, MultiRunResult, Policy, RunConfig, RunResult};
use routeimprove::stream_rng;
use serde::Serialize;

use crate::failure::{CliResult, Failure};
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::problems::{load, OperatorArg, Problem, ProblemArgs};

pub const RESULTS_FILE: &str = "results.csv";
pub const SOLUTIONS_FILE: &str = "solutions.jsonl";
pub const TRACES_FILE: &str = "traces.csv";

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problems: ProblemArgs,
    /// Hand-crafted policy: first-improvement or best-improvement.
    #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
    pub policy: Option<String>,
    /// Learned policy; several checkpoints run as a multi-policy ensemble.
    #[arg(long, num_args = 1..)]
    pub checkpoint: Vec<PathBuf>,
    /// Step limit T.
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Independent runs per instance; the best is reported.
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    #[arg(long, value_enum, default_value_t = OperatorArg::TwoOpt)]
    pub operator: OperatorArg,
    /// Write per-step costs of the reported run.
    #[arg(long)]
    pub trace: bool,
    /// Record zero runtimes so repeated runs give identical files.
    #[arg(long)]
    pub no_timing: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Resolved policies and the method label used in results.
pub struct Method {
    pub label: String,
    pub policies: Vec<Policy>,
}

pub fn load_learned(paths: &[PathBuf], problems: &[Problem]) -> CliResult<Vec<Policy>> {
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let ckpt = Checkpoint::load(p).map_err(|e| Failure::from(e).context(p.display()))?;
        if let Some(bad) = problems.iter().find(|q| q.inst.kind() != ckpt.kind) {
            return Err(Failure::config(format!(
                "{} was trained for {:?} but {} is {:?}",
                p.display(),
                ckpt.kind,
                bad.id,
                bad.inst.kind()
            )));
        }
        out.push(Policy::Learned(Arc::new(ckpt.actor)));
    }
    Ok(out)
}

pub fn baseline(name: &str) -> CliResult<Policy> {
    Policy::baseline(name).ok_or_else(|| {
        Failure::config(format!(
            "unknown policy `{name}` (expected first-improvement or best-improvement)"
        ))
    })
}

/// Seeds of `runs` independent runs; the first is `seed` itself.
pub fn run_seeds(seed: u64, runs: usize) -> Vec<u64> {
    (0..runs)
        .map(|r| if r == 0 { seed } else { stream_rng(seed, r as u64).gen() })
        .collect()
}

pub struct Solved {
    pub best: RunResult,
    pub runtime_ms: f64,
}

/// Solves every problem with `method`; results are in problem order.
pub fn solve_all(
    problems: &[Problem],
    method: &Method,
    cfg: &RunConfig,
    seed: u64,
    runs: usize,
) -> CliResult<Vec<Solved>> {
    let tasks = problems
        .iter()
        .enumerate()
        .map(|(k, p)| p.task(seed, k))
        .collect::<CliResult<Vec<_>>>()?;
    if method.policies.len() == 1 && runs == 1 {
        let start = Instant::now();
        let results = run_many(&tasks, &method.policies[0], cfg)?;
        let per = start.elapsed().as_secs_f64() * 1e3 / tasks.len() as f64;
        return Ok(results
            .into_iter()
            .map(|best| Solved { best, runtime_ms: per })
            .collect());
    }
    let solved = par::try_map_range(tasks.len(), |k| {
        let start = Instant::now();
        let m: MultiRunResult = if method.policies.len() > 1 {
            multi_policy(&tasks[k], &method.policies, cfg)?
        } else {
            multi_run(&tasks[k], &method.policies[0], cfg, &run_seeds(tasks[k].seed, runs))?
        };
        Ok::<_, routeimprove::Error>(Solved {
            best: m.runs[m.best_index].clone(),
            runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    })?;
    Ok(solved)
}

pub fn records(problems: &[Problem], solved: &[Solved], method: &str, steps: usize, seed: u64, timing: bool) -> Vec<ResultRecord> {
    problems
        .iter()
        .zip(solved)
        .map(|(p, s)| {
            let mut r = ResultRecord::new(p.id.clone(), method, steps, seed, s.best.best_cost).with_reference(p.reference);
            r.runtime_ms = if timing { s.runtime_ms } else { 0.0 };
            r.note = p.note.clone();
            r
        })
        .collect()
}

pub fn write_results_file(path: &Path, recs: &[ResultRecord]) -> CliResult<()> {
    write_results(BufWriter::new(File::create(path)?), recs)?;
    Ok(())
}

#[derive(Serialize)]
struct SolutionLine<'a> {
    instance_id: &'a str,
    cost: f64,
    sequence: &'a [usize],
}

#[derive(Serialize)]
struct TraceRow<'a> {
    instance_id: &'a str,
    step: usize,
    current_cost: f64,
    incumbent_cost: f64,
}

pub fn run(a: SolveArgs, data_dir: &Path) -> CliResult<()> {
    if a.runs == 0 {
        return Err(Failure::config("--runs must be at least 1"));
    }
    if a.runs > 1 && a.checkpoint.len() > 1 {
        return Err(Failure::config("--runs > 1 cannot be combined with several checkpoints"));
    }
    let (problems, mut inputs) = load(&a.problems, data_dir, 100)?;
    let method = match &a.policy {
        Some(name) => {
            let p = baseline(name)?;
            Method {
                label: p.name().to_string(),
                policies: vec![p],
            }
        }
        None => Method {
            label: if a.checkpoint.len() > 1 {
                format!("learned-mp{}", a.checkpoint.len())
            } else {
                "learned".into()
            },
            policies: load_learned(&a.checkpoint, &problems)?,
        },
    };
    let label = if a.runs > 1 {
        format!("{}-mr{}", method.label, a.runs)
    } else {
        method.label.clone()
    };
    inputs.extend(a.checkpoint.iter().cloned());
    let cfg = RunConfig {
        op: Operator::from(a.operator),
        steps: a.steps,
        record_trace: a.trace,
    };
    let solved = solve_all(&problems, &method, &cfg, a.seed, a.runs)?;
    let recs = records(&problems, &solved, &label, a.steps, a.seed, !a.no_timing);

    std::fs::create_dir_all(&a.out)?;
    let mut manifest = RunManifest::new("solve", &a, a.seed)?;
    manifest.inputs = inputs;
    let results = a.out.join(RESULTS_FILE);
    write_results_file(&results, &recs)?;
    let mut sol = BufWriter::new(File::create(a.out.join(SOLUTIONS_FILE))?);
    for (p, s) in problems.iter().zip(&solved) {
        serde_json::to_writer(
            &mut sol,
            &SolutionLine {
                instance_id: &p.id,
                cost: s.best.best_cost,
                sequence: s.best.best.seq(),
            },
        )?;
        sol.write_all(b"\n")?;
    }
    sol.flush()?;
    manifest.outputs.extend([results, a.out.join(SOLUTIONS_FILE)]);
    if a.trace {
        let mut w = csv::Writer::from_path(a.out.join(TRACES_FILE))?;
        for (p, s) in problems.iter().zip(&solved) {
            for t in &s.best.trace {
                w.serialize(TraceRow {
                    instance_id: &p.id,
                    step: t.step,
                    current_cost: t.current_cost,
                    incumbent_cost: t.incumbent_cost,
                })?;
            }
        }
        w.flush()?;
        manifest.outputs.push(a.out.join(TRACES_FILE));
    }
    manifest.write(&a.out.join(MANIFEST_FILE))?;

    let mean = recs.iter().map(|r| r.cost).sum::<f64>() / recs.len() as f64;
    print!("{label}: {} instances, T = {}, mean cost {mean:.4}", recs.len(), a.steps);
    let gaps: Option<Vec<f64>> = recs.iter().map(|r| r.gap_pct).collect();
    if let Some(g) = gaps {
        print!(", mean gap {:.3}%", g.iter().sum::<f64>() / g.len() as f64);
    }
    println!();
    Ok(())
}
