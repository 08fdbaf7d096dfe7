use std::time::{Duration, Instant};

use rand::Rng;

use crate::error::{Error, Result};
use crate::io::{gap_pct, initial_random};
use crate::routing::{Instance, Solution};
use crate::search::{run_many, Policy, RunConfig, Task};
use crate::stream_rng;

/// Start solution and sampling seed of test instance `k`.
pub fn test_start(inst: &Instance, seed: u64, k: usize) -> Result<(Solution, u64)> {
    let mut rng = stream_rng(seed, k as u64);
    let initial = initial_random(inst, &mut rng)?;
    Ok((initial, rng.gen()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceEval {
    pub initial_cost: f64,
    pub cost: f64,
    pub reference: Option<f64>,
    pub gap_pct: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub instances: Vec<InstanceEval>,
    pub mean_cost: f64,
    pub std_err_cost: f64,
    /// Present when every instance has a reference.
    pub mean_gap_pct: Option<f64>,
    pub std_err_gap: Option<f64>,
    pub runtime: Duration,
}

/// Sample mean and standard error of the mean.
pub fn mean_and_std_err(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs `policy` for `cfg.steps` steps on every test instance from a
/// random start drawn from `seed`.
pub fn evaluate_policy(
    policy: &Policy,
    tests: &[Instance],
    references: Option<&[f64]>,
    cfg: &RunConfig,
    seed: u64,
) -> Result<EvalReport> {
    if tests.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if let Some(r) = references {
        if r.len() != tests.len() {
            return Err(Error::LengthMismatch {
                what: "test instances and references",
                left: tests.len(),
                right: r.len(),
            });
        }
    }
    let start = Instant::now();
    let tasks = tests
        .iter()
        .enumerate()
        .map(|(k, inst)| {
            let (initial, s) = test_start(inst, seed, k)?;
            Ok(Task::new(inst, initial, s))
        })
        .collect::<Result<Vec<_>>>()?;
    let runs = run_many(&tasks, policy, cfg)?;
    let runtime = start.elapsed();
    let instances: Vec<InstanceEval> = runs
        .iter()
        .zip(&tasks)
        .enumerate()
        .map(|(k, (r, t))| {
            let reference = references.map(|refs| refs[k]);
            InstanceEval {
                initial_cost: r.initial_cost,
                cost: r.best_cost,
                reference,
                gap_pct: reference.map(|x| gap_pct(r.best_cost, x)),
                seed: t.seed,
            }
        })
        .collect();
    let costs: Vec<f64> = instances.iter().map(|e| e.cost).collect();
    let (mean_cost, std_err_cost) = mean_and_std_err(&costs);
    let gaps: Option<Vec<f64>> = instances.iter().map(|e| e.gap_pct).collect();
    let gap_stats = gaps.map(|g| mean_and_std_err(&g));
    Ok(EvalReport {
        instances,
        mean_cost,
        std_err_cost,
        mean_gap_pct: gap_stats.map(|s| s.0),
        std_err_gap: gap_stats.map(|s| s.1),
        runtime,
    })
}
