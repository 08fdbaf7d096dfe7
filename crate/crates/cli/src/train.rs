use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use routeimprove::routing::{Operator, ProblemKind};
use routeimprove::train::{train, AdamConfig, InitialKind, TrainConfig};
use serde::Deserialize;

use crate::failure::{CliResult, Failure};
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::problems::{KindArg, OperatorArg};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Output directory for checkpoints, log and manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML settings, or a JSON manifest of an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Shrinks the default instances per epoch and epoch count.
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub capacity: Option<u32>,
    #[arg(long)]
    pub slots: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Instances per epoch.
    #[arg(long)]
    pub instances: Option<usize>,
    /// Batches per epoch.
    #[arg(long)]
    pub batches: Option<usize>,
    /// Rollout step limit.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub n_step: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Standardize actor advantages per update.
    #[arg(long)]
    pub normalize_advantages: bool,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long, value_enum)]
    pub operator: Option<OperatorArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoints to keep.
    #[arg(long)]
    pub keep: Option<usize>,
}

/// Optional settings read from a config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    scale: Option<f64>,
    kind: Option<ProblemKind>,
    n: Option<usize>,
    capacity: Option<u32>,
    slots: Option<usize>,
    epochs: Option<usize>,
    instances_per_epoch: Option<usize>,
    batches_per_epoch: Option<usize>,
    steps: Option<usize>,
    n_step: Option<usize>,
    gamma: Option<f64>,
    normalize_advantages: Option<bool>,
    lr: Option<f64>,
    lr_decay: Option<f64>,
    adam: Option<AdamConfig>,
    d_model: Option<usize>,
    n_blocks: Option<usize>,
    op: Option<Operator>,
    initial: Option<InitialKind>,
    seed: Option<u64>,
    keep_checkpoints: Option<usize>,
}

fn read_file_config(path: &Path) -> CliResult<FileConfig> {
    let text = fs::read_to_string(path).map_err(|e| Failure::from(e).context(path.display()))?;
    let bad = |e: String| Failure::config(format!("{}: {e}", path.display()));
    if path.extension().is_some_and(|e| e == "json") {
        let mut v: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        if let Some(cfg) = v.get_mut("config") {
            v = cfg.take();
        }
        serde_json::from_value(v).map_err(|e| bad(e.to_string()))
    } else {
        toml::from_str(&text).map_err(|e| bad(e.to_string()))
    }
}

/// Shrinks instances per epoch (kept a multiple of the batch count) and the
/// epoch count by `scale`.
pub fn scaled(mut cfg: TrainConfig, scale: f64) -> CliResult<TrainConfig> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Failure::config(format!("--scale must be positive, got {scale}")));
    }
    let b = cfg.batches_per_epoch.max(1);
    let batches = ((cfg.instances_per_epoch as f64 * scale) / b as f64).round().max(1.0) as usize;
    cfg.instances_per_epoch = batches * b;
    cfg.epochs = ((cfg.epochs as f64 * scale).round() as usize).max(1);
    Ok(cfg)
}

/// Defaults, then `--scale`, then the config file, then flags.
pub fn resolve(a: &TrainArgs) -> CliResult<TrainConfig> {
    let file = match &a.config {
        Some(p) => read_file_config(p)?,
        None => FileConfig::default(),
    };
    let kind = a.kind.map(ProblemKind::from).or(file.kind).unwrap_or(ProblemKind::Tsp);
    let n = a.n.or(file.n).unwrap_or(20);
    let base = match kind {
        ProblemKind::Tsp => TrainConfig::tsp(n),
        ProblemKind::Cvrp => TrainConfig::cvrp(n),
    };
    let mut c = scaled(base, a.scale.or(file.scale).unwrap_or(1.0))?;
    macro_rules! set {
        ($field:ident, $flag:expr, $file:expr) => {
            if let Some(v) = $flag.or($file) {
                c.$field = v;
            }
        };
    }
    set!(epochs, a.epochs, file.epochs);
    set!(instances_per_epoch, a.instances, file.instances_per_epoch);
    set!(batches_per_epoch, a.batches, file.batches_per_epoch);
    set!(steps, a.steps, file.steps);
    set!(n_step, a.n_step, file.n_step);
    set!(gamma, a.gamma, file.gamma);
    set!(
        normalize_advantages,
        a.normalize_advantages.then_some(true),
        file.normalize_advantages
    );
    set!(lr, a.lr, file.lr);
    set!(lr_decay, a.lr_decay, file.lr_decay);
    set!(adam, None, file.adam);
    set!(d_model, a.d_model, file.d_model);
    set!(n_blocks, a.blocks, file.n_blocks);
    set!(op, a.operator.map(Operator::from), file.op);
    set!(initial, None, file.initial);
    set!(seed, a.seed, file.seed);
    set!(keep_checkpoints, a.keep, file.keep_checkpoints);
    c.capacity = a.capacity.or(file.capacity).or(c.capacity);
    c.slots = a.slots.or(file.slots).or(c.slots);
    c.validate()?;
    Ok(c)
}

pub fn run(a: TrainArgs) -> CliResult<()> {
    let cfg = resolve(&a)?;
    eprintln!("{}", serde_json::to_string_pretty(&cfg)?);
    let mut manifest = RunManifest::new("train", &cfg, cfg.seed)?;
    manifest.inputs.extend(a.config.clone());
    manifest.write(&a.out.join(MANIFEST_FILE))?;
    let outcome = train(&cfg, Some(&a.out), |r| {
        log::info!(
            "epoch {} batch {}: mean reward {:.6}, mean incumbent {:.4}, lr {:.3e}",
            r.epoch,
            r.batch,
            r.mean_reward,
            r.mean_incumbent_cost,
            r.lr
        )
    });
    let outcome = match outcome {
        Ok(o) => o,
        Err(e @ routeimprove::Error::NonFinite(_)) => return Err(Failure::numeric(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    manifest.outputs.push(a.out.join(routeimprove::train::LOG_FILE));
    manifest.outputs.extend(outcome.files.iter().cloned());
    manifest.write(&a.out.join(MANIFEST_FILE))?;
    if let Some(last) = outcome.files.last() {
        println!("{}", last.display());
    }
    Ok(())
}
