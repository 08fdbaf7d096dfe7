use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use routeimprove::io::cache::{cached_set, read_instances};
use routeimprove::io::{exact_tsp, load_benchmark, scale_to_unit, GeneratorSpec};
use routeimprove::routing::{Instance, Operator, Point, ProblemKind};
use routeimprove::search::Task;
use routeimprove::train::test_start;
use serde::Serialize;

use crate::failure::{CliResult, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    Tsp,
    Cvrp,
}

impl From<KindArg> for ProblemKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Tsp => ProblemKind::Tsp,
            KindArg::Cvrp => ProblemKind::Cvrp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum OperatorArg {
    #[value(name = "2-opt")]
    TwoOpt,
    Swap,
    Relocate,
}

impl From<OperatorArg> for Operator {
    fn from(o: OperatorArg) -> Self {
        match o {
            OperatorArg::TwoOpt => Operator::TwoOpt,
            OperatorArg::Swap => Operator::Swap,
            OperatorArg::Relocate => Operator::Relocate,
        }
    }
}

/// Where the instances come from. Without `--instances` or `--benchmark`
/// a random set is generated (and cached under the data directory).
#[derive(Debug, Clone, Args, Serialize)]
pub struct ProblemArgs {
    /// Line-delimited JSON instance file.
    #[arg(long, conflicts_with = "benchmark")]
    pub instances: Option<PathBuf>,
    /// TSPLIB or CVRPLIB files.
    #[arg(long, num_args = 1..)]
    pub benchmark: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = KindArg::Tsp)]
    pub kind: KindArg,
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    /// Size of the random set.
    #[arg(long)]
    pub count: Option<usize>,
    /// Seed of the random set.
    #[arg(long, default_value_t = 12345)]
    pub instance_seed: u64,
    #[arg(long)]
    pub capacity: Option<u32>,
    #[arg(long)]
    pub slots: Option<usize>,
    /// Use Held-Karp optima as references (TSP, at most 13 cities).
    #[arg(long)]
    pub exact: bool,
}

/// One instance to solve.
#[derive(Debug, Clone)]
pub struct Problem {
    pub id: String,
    pub inst: Instance,
    /// Unit-square coordinates fed to learned policies.
    pub features: Option<Vec<Point>>,
    pub reference: Option<f64>,
    pub note: String,
}

impl Problem {
    /// Random start and sampling seed of problem `k`.
    pub fn task(&self, seed: u64, k: usize) -> CliResult<Task<'_>> {
        let (initial, s) = test_start(&self.inst, seed, k)?;
        Ok(Task {
            inst: &self.inst,
            initial,
            seed: s,
            features: self.features.as_deref(),
        })
    }
}

/// Loads the problems; `default_count` is used for random sets without
/// `--count`. Returns the problems and the files read.
pub fn load(a: &ProblemArgs, data_dir: &Path, default_count: usize) -> CliResult<(Vec<Problem>, Vec<PathBuf>)> {
    let mut problems = Vec::new();
    let mut inputs = Vec::new();
    if !a.benchmark.is_empty() {
        for path in &a.benchmark {
            let b = load_benchmark(path).map_err(|e| Failure::from(e).context(path.display()))?;
            let (unit, _) = scale_to_unit(&b.instance)?;
            problems.push(Problem {
                id: b.name.clone(),
                features: Some(unit.coords().to_vec()),
                reference: b.optimum,
                note: "scaled-features".into(),
                inst: b.instance,
            });
            inputs.push(path.clone());
        }
    } else {
        let (set, path) = match &a.instances {
            Some(path) => (
                read_instances(path).map_err(|e| Failure::from(e).context(path.display()))?,
                path.clone(),
            ),
            None => {
                let spec = GeneratorSpec {
                    kind: a.kind.into(),
                    n: a.n,
                    capacity: a.capacity,
                    slots: a.slots,
                };
                spec.validate()?;
                cached_set(data_dir, &spec, a.count.unwrap_or(default_count), a.instance_seed)?
            }
        };
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        for (k, inst) in set.into_iter().enumerate() {
            problems.push(Problem {
                id: format!("{stem}#{k}"),
                inst,
                features: None,
                reference: None,
                note: String::new(),
            });
        }
        inputs.push(path);
    }
    if problems.is_empty() {
        return Err(Failure::config("no instances to solve"));
    }
    if a.exact {
        for p in &mut problems {
            if p.inst.kind() != ProblemKind::Tsp {
                return Err(Failure::config("--exact needs TSP instances"));
            }
            p.reference = Some(exact_tsp(&p.inst)?.0);
        }
    }
    Ok((problems, inputs))
}
