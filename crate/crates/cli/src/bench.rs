use std::path::{Path, PathBuf};

use clap::Args;
use routeimprove::io::ResultRecord;
use routeimprove::routing::Operator;
use routeimprove::search::{Policy, RunConfig};
use routeimprove::train::mean_and_std_err;
use serde::Serialize;

use crate::failure::{CliResult, Failure};
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::problems::{load, OperatorArg, ProblemArgs};
use crate::solve::{load_learned, records, solve_all, write_results_file, Method, RESULTS_FILE};

pub const TABLE_FILE: &str = "bench.csv";
/// Test-set size before `--scale`.
pub const DEFAULT_COUNT: usize = 10_000;

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[command(flatten)]
    pub problems: ProblemArgs,
    /// Learned policy to include.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Step limits to compare at.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1000])]
    pub steps: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Shrinks the default random test-set size.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, value_enum, default_value_t = OperatorArg::TwoOpt)]
    pub operator: OperatorArg,
    #[arg(long)]
    pub no_timing: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub method: String,
    pub steps: usize,
    pub instances: usize,
    pub mean_cost: f64,
    pub std_err: f64,
    pub mean_gap_pct: Option<f64>,
    /// Share of instances where this method is strictly cheaper than each
    /// other method, in method order.
    pub win_rates: Vec<f64>,
}

/// Builds the table from per-instance records grouped by (method, steps);
/// `methods` fixes the row and win-rate column order.
pub fn table(recs: &[ResultRecord], methods: &[String], steps: &[usize]) -> Vec<TableRow> {
    let costs = |m: &str, t: usize| -> Vec<&ResultRecord> {
        recs.iter().filter(|r| r.method == m && r.steps == t).collect()
    };
    let mut rows = Vec::new();
    for &t in steps {
        for m in methods {
            let mine = costs(m, t);
            let c: Vec<f64> = mine.iter().map(|r| r.cost).collect();
            let (mean_cost, std_err) = mean_and_std_err(&c);
            let gaps: Option<Vec<f64>> = mine.iter().map(|r| r.gap_pct).collect();
            let win_rates = methods
                .iter()
                .map(|other| {
                    let theirs = costs(other, t);
                    let wins = mine.iter().zip(&theirs).filter(|(a, b)| a.cost < b.cost - 1e-9).count();
                    wins as f64 / mine.len() as f64
                })
                .collect();
            rows.push(TableRow {
                method: m.clone(),
                steps: t,
                instances: mine.len(),
                mean_cost,
                std_err,
                mean_gap_pct: gaps.map(|g| g.iter().sum::<f64>() / g.len() as f64),
                win_rates,
            });
        }
    }
    rows
}

fn write_table(path: &Path, rows: &[TableRow], methods: &[String]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["method", "steps", "instances", "mean_cost", "std_err", "mean_gap_pct"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(methods.iter().map(|m| format!("win_vs_{m}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.method.clone(),
            r.steps.to_string(),
            r.instances.to_string(),
            r.mean_cost.to_string(),
            r.std_err.to_string(),
            r.mean_gap_pct.map(|g| g.to_string()).unwrap_or_default(),
        ];
        rec.extend(r.win_rates.iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(a: BenchArgs, data_dir: &Path) -> CliResult<()> {
    if a.steps.is_empty() {
        return Err(Failure::config("--steps needs at least one value"));
    }
    if !(a.scale > 0.0) {
        return Err(Failure::config("--scale must be positive"));
    }
    let default_count = ((DEFAULT_COUNT as f64 * a.scale).round() as usize).max(1);
    let (problems, mut inputs) = load(&a.problems, data_dir, default_count)?;
    let mut methods = Vec::new();
    if let Some(c) = &a.checkpoint {
        methods.push(Method {
            label: "learned".into(),
            policies: load_learned(std::slice::from_ref(c), &problems)?,
        });
        inputs.push(c.clone());
    }
    for p in [Policy::FirstImprovement, Policy::BestImprovement] {
        methods.push(Method {
            label: p.name().into(),
            policies: vec![p],
        });
    }
    let mut recs = Vec::new();
    for &t in &a.steps {
        let cfg = RunConfig {
            op: Operator::from(a.operator),
            ..RunConfig::new(t)
        };
        for m in &methods {
            let solved = solve_all(&problems, m, &cfg, a.seed, 1)?;
            recs.extend(records(&problems, &solved, &m.label, t, a.seed, !a.no_timing));
        }
    }
    let labels: Vec<String> = methods.iter().map(|m| m.label.clone()).collect();
    let rows = table(&recs, &labels, &a.steps);

    std::fs::create_dir_all(&a.out)?;
    write_results_file(&a.out.join(RESULTS_FILE), &recs)?;
    write_table(&a.out.join(TABLE_FILE), &rows, &labels)?;
    let mut manifest = RunManifest::new("bench", &a, a.seed)?;
    manifest.inputs = inputs;
    manifest.outputs = vec![a.out.join(RESULTS_FILE), a.out.join(TABLE_FILE)];
    manifest.write(&a.out.join(MANIFEST_FILE))?;

    print!("| method | T | mean cost | std err | gap % |");
    for m in &labels {
        print!(" win vs {m} |");
    }
    println!();
    println!("|{}", "---|".repeat(5 + labels.len()));
    for r in &rows {
        let gap = r.mean_gap_pct.map(|g| format!("{g:.3}")).unwrap_or_else(|| "-".into());
        print!("| {} | {} | {:.4} | {:.4} | {gap} |", r.method, r.steps, r.mean_cost, r.std_err);
        for w in &r.win_rates {
            print!(" {:.3} |", w);
        }
        println!();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows_and_win_rates() {
        let mut recs = Vec::new();
        for (m, costs) in [("a", [1.0, 2.0, 3.0]), ("b", [2.0, 2.0, 1.0])] {
            for (k, c) in costs.iter().enumerate() {
                recs.push(ResultRecord::new(format!("i{k}"), m, 10, 0, *c));
            }
        }
        let methods = vec!["a".to_string(), "b".to_string()];
        let rows = table(&recs, &methods, &[10]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].mean_cost, 2.0);
        assert_eq!(rows[0].win_rates, vec![0.0, 1.0 / 3.0]);
        assert_eq!(rows[1].win_rates, vec![1.0 / 3.0, 0.0]);
    }
}
