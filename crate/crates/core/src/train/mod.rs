//! Batched n-step actor-critic for the continuing improvement task.
//!
//! Every instance of a batch runs exactly `steps` steps from a random start.
//! The rollout is cut into segments of at most `n_step` steps; each segment
//! bootstraps from the critic's value of its last state (also at the step
//! limit), and both networks take one Adam step per segment with gradients
//! averaged over batch and segment length.

mod adam;
mod advantage;
mod eval;

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamConfig};
pub use advantage::advantage_targets;
pub use eval::{evaluate_policy, mean_and_std_err, test_start, EvalReport, InstanceEval};

use crate::error::{Error, Result};
use crate::io::{generate_set, initial_nearest_insertion, initial_random, GeneratorSpec};
use crate::net::checkpoint::Checkpoint;
use crate::net::{node_features, ActorOutput, Batch, CriticOutput, NetConfig, Network, NormMode, Role};
use crate::par;
use crate::routing::{Action, Instance, Operator, ProblemKind};
use crate::search::{policy_mask, step, Decision, SearchState};
use crate::stream_rng;

/// Where training rollouts start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    #[default]
    Random,
    NearestInsertion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: ProblemKind,
    /// Customers (cities for TSP).
    pub n: usize,
    #[serde(default)]
    pub capacity: Option<u32>,
    /// Padded CVRP solution length.
    #[serde(default)]
    pub slots: Option<usize>,
    /// E
    pub epochs: usize,
    /// M
    pub instances_per_epoch: usize,
    /// B
    pub batches_per_epoch: usize,
    /// Rollout step limit T.
    pub steps: usize,
    pub n_step: usize,
    pub gamma: f64,
    /// Standardize actor advantages over each segment.
    #[serde(default)]
    pub normalize_advantages: bool,
    pub lr: f64,
    /// Learning rate in epoch `e` is `lr * lr_decay^e`.
    pub lr_decay: f64,
    pub adam: AdamConfig,
    pub d_model: usize,
    pub n_blocks: usize,
    pub op: Operator,
    pub initial: InitialKind,
    pub seed: u64,
    /// Checkpoints kept on disk and in memory.
    pub keep_checkpoints: usize,
}

impl TrainConfig {
    /// Full-scale TSP settings.
    pub fn tsp(n: usize) -> Self {
        TrainConfig {
            kind: ProblemKind::Tsp,
            n,
            capacity: None,
            slots: None,
            epochs: 200,
            instances_per_epoch: 10_240,
            batches_per_epoch: 10,
            steps: 200,
            n_step: 4,
            gamma: 0.99,
            normalize_advantages: false,
            lr: 1e-4,
            lr_decay: 0.99,
            adam: AdamConfig::default(),
            d_model: 128,
            n_blocks: 3,
            op: Operator::TwoOpt,
            initial: InitialKind::Random,
            seed: 0,
            keep_checkpoints: 8,
        }
    }

    /// Full-scale CVRP settings.
    pub fn cvrp(n: usize) -> Self {
        let (steps, n_step) = if n <= 20 { (360, 10) } else { (480, 12) };
        TrainConfig {
            kind: ProblemKind::Cvrp,
            instances_per_epoch: 3_840,
            steps,
            n_step,
            gamma: 0.996,
            ..Self::tsp(n)
        }
    }

    pub fn generator(&self) -> GeneratorSpec {
        GeneratorSpec {
            kind: self.kind,
            n: self.n,
            capacity: self.capacity,
            slots: self.slots,
        }
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            n_blocks: self.n_blocks,
            ..NetConfig::with_width(self.kind.feature_dim(), self.d_model)
        }
    }

    pub fn batch_size(&self) -> usize {
        self.instances_per_epoch / self.batches_per_epoch.max(1)
    }

    /// Learning rate used throughout epoch `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi(epoch as i32)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        self.generator().validate()?;
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.batches_per_epoch == 0 || self.instances_per_epoch == 0 {
            return fail("instances and batches per epoch must be positive".into());
        }
        if self.instances_per_epoch % self.batches_per_epoch != 0 {
            return fail(format!(
                "instances per epoch ({}) must be divisible by batches per epoch ({})",
                self.instances_per_epoch, self.batches_per_epoch
            ));
        }
        if self.n_step == 0 || self.n_step > self.steps {
            return fail(format!("n-step ({}) must lie in 1..=steps ({})", self.n_step, self.steps));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail(format!("gamma ({}) must lie in (0, 1) for the continuing task", self.gamma));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return fail("learning rate must be positive and its decay in (0, 1]".into());
        }
        if self.d_model == 0 || self.d_model % 2 != 0 || self.n_blocks == 0 {
            return fail("d_model must be even and positive, n_blocks positive".into());
        }
        if self.keep_checkpoints == 0 {
            return fail("keep_checkpoints must be at least 1".into());
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub epoch: usize,
    pub batch: usize,
    /// Mean reward per instance and step.
    pub mean_reward: f64,
    /// Mean incumbent cost at the step limit.
    pub mean_incumbent_cost: f64,
    pub lr: f64,
    /// Seconds since training started.
    pub wall_time: f64,
}

struct StepRecord {
    actor: ActorOutput,
    critic: CriticOutput,
    cells: Vec<Action>,
    rewards: Vec<f64>,
}

/// Up to `n_step` steps of a whole batch, plus the bootstrap values of the
/// final states.
struct Segment {
    steps: Vec<StepRecord>,
    bootstrap: Vec<f64>,
}

struct Rollout<'a> {
    insts: &'a [Instance],
    states: Vec<SearchState>,
    rngs: Vec<ChaCha8Rng>,
}

impl Rollout<'_> {
    fn batch(&self) -> Result<Batch> {
        let xs = par::map_range(self.states.len(), |b| node_features(&self.insts[b], &self.states[b].current));
        Batch::new(&xs)
    }

    fn segment(&mut self, actor: &Network, critic: &Network, len: usize, op: Operator, mode: NormMode) -> Result<Segment> {
        let mut steps = Vec::with_capacity(len);
        for _ in 0..len {
            let batch = self.batch()?;
            let masks = par::map_range(self.states.len(), |b| policy_mask(&self.insts[b], &self.states[b], op));
            let a_out = actor.actor_forward(&batch, &masks, mode)?;
            let c_out = critic.critic_forward(&batch, mode)?;
            let mut cells = Vec::with_capacity(self.states.len());
            let mut rewards = Vec::with_capacity(self.states.len());
            for b in 0..self.states.len() {
                let cell = a_out.dists[b].sample_cell(&mut self.rngs[b]);
                let action = if op.is_symmetric() { cell.canonical() } else { cell };
                let r = step(&self.insts[b], &mut self.states[b], Decision::Move(action), op)?;
                debug_assert!(r >= 0.0);
                cells.push(cell);
                rewards.push(r);
            }
            steps.push(StepRecord {
                actor: a_out,
                critic: c_out,
                cells,
                rewards,
            });
        }
        let bootstrap = critic.critic_forward(&self.batch()?, mode)?.values;
        Ok(Segment { steps, bootstrap })
    }
}

impl Segment {
    fn log_summary(&self, epoch: usize, batch: usize, t: usize) {
        let n = (self.steps.len() * self.bootstrap.len()) as f64;
        let value = self.steps.iter().flat_map(|s| s.critic.values.iter()).sum::<f64>() / n;
        let entropy = self
            .steps
            .iter()
            .flat_map(|s| s.actor.dists.iter())
            .map(|d| -d.probs().iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>())
            .sum::<f64>()
            / n;
        log::debug!("epoch {epoch} batch {batch} step {t}: mean value {value:.5}, entropy {entropy:.4}");
    }

    /// Gradients to descend for the actor and the critic, scaled by `scale`.
    fn gradients(
        &self,
        actor: &Network,
        critic: &Network,
        gamma: f64,
        normalize: bool,
        scale: f64,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let batch = self.bootstrap.len();
        let mut deltas = vec![vec![0.0; batch]; self.steps.len()];
        for b in 0..batch {
            let rewards: Vec<f64> = self.steps.iter().map(|s| s.rewards[b]).collect();
            let values: Vec<f64> = self.steps.iter().map(|s| s.critic.values[b]).collect();
            let d = advantage_targets(&rewards, self.bootstrap[b], &values, gamma)?;
            for (i, di) in d.into_iter().enumerate() {
                deltas[i][b] = di;
            }
        }
        let (shift, spread) = if normalize {
            let all: Vec<f64> = deltas.iter().flatten().copied().collect();
            let mean = all.iter().sum::<f64>() / all.len() as f64;
            let var = all.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / all.len() as f64;
            (mean, var.sqrt() + 1e-8)
        } else {
            (0.0, 1.0)
        };
        let mut ga = actor.zero_grad();
        let mut gc = critic.zero_grad();
        for (s, d) in self.steps.iter().zip(&deltas) {
            let wa: Vec<f64> = d.iter().map(|x| -scale * (x - shift) / spread).collect();
            let wc: Vec<f64> = d.iter().map(|x| -scale * x).collect();
            actor.actor_backward(&s.actor, &s.cells, &wa, &mut ga)?;
            critic.critic_backward(&s.critic, &wc, &mut gc)?;
        }
        Ok((ga, gc))
    }
}

fn ensure_finite(what: &str, xs: &[f64], epoch: usize, batch: usize) -> Result<()> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(k) => Err(Error::NonFinite(format!(
            "{what} entry {k} is {} (epoch {epoch}, batch {batch})",
            xs[k]
        ))),
        None => Ok(()),
    }
}

/// Seed of the instances and random streams of epoch `epoch`.
fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    stream_rng(seed, 2 + epoch as u64).gen()
}

/// Actor, critic and optimizer state between epochs.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    actor: Network,
    critic: Network,
    actor_opt: Adam,
    critic_opt: Adam,
    epoch: usize,
    started: Instant,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let net = config.net_config();
        let actor = Network::new(net, Role::Actor, &mut stream_rng(config.seed, 0))?;
        let critic = Network::new(net, Role::Critic, &mut stream_rng(config.seed, 1))?;
        Ok(Trainer {
            actor_opt: Adam::new(config.adam, actor.num_weights()),
            critic_opt: Adam::new(config.adam, critic.num_weights()),
            config,
            actor,
            critic,
            epoch: 0,
            started: Instant::now(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn actor(&self) -> &Network {
        &self.actor
    }

    pub fn critic(&self) -> &Network {
        &self.critic
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            kind: self.config.kind,
            epoch: self.epoch as u32,
            actor: self.actor.clone(),
            critic: Some(self.critic.clone()),
        }
    }

    /// Trains one epoch on freshly generated instances.
    pub fn run_epoch(&mut self, mut on_record: impl FnMut(&TrainLogRecord)) -> Result<Vec<TrainLogRecord>> {
        let cfg = self.config;
        let seed = epoch_seed(cfg.seed, self.epoch);
        let instances = generate_set(&cfg.generator(), cfg.instances_per_epoch, seed);
        let lr = cfg.lr_at(self.epoch);
        let bs = cfg.batch_size();
        let mut log = Vec::with_capacity(cfg.batches_per_epoch);
        for (bi, insts) in instances.chunks(bs).enumerate() {
            let offset = bi * bs;
            let mut rngs: Vec<ChaCha8Rng> = (0..insts.len())
                .map(|k| stream_rng(seed, (1 << 32) + (offset + k) as u64))
                .collect();
            let states = insts
                .iter()
                .zip(rngs.iter_mut())
                .map(|(inst, rng)| {
                    let s = match cfg.initial {
                        InitialKind::Random => initial_random(inst, rng)?,
                        InitialKind::NearestInsertion => initial_nearest_insertion(inst)?,
                    };
                    SearchState::new(inst, s)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut roll = Rollout { insts, states, rngs };
            let mut total_reward = 0.0;
            let mut t = 0;
            while t < cfg.steps {
                let len = cfg.n_step.min(cfg.steps - t);
                let seg = roll.segment(&self.actor, &self.critic, len, cfg.op, NormMode::Train)?;
                total_reward += seg.steps.iter().flat_map(|s| s.rewards.iter()).sum::<f64>();
                let scale = 1.0 / (insts.len() * len) as f64;
                let (ga, gc) = seg.gradients(&self.actor, &self.critic, cfg.gamma, cfg.normalize_advantages, scale)?;
                if log::log_enabled!(log::Level::Debug) {
                    seg.log_summary(self.epoch, bi, t);
                }
                ensure_finite("critic value", &seg.bootstrap, self.epoch, bi)?;
                ensure_finite("actor gradient", &ga, self.epoch, bi)?;
                ensure_finite("critic gradient", &gc, self.epoch, bi)?;
                for s in &seg.steps {
                    if let Some(st) = &s.actor.stats {
                        self.actor.update_running(st);
                    }
                    if let Some(st) = &s.critic.stats {
                        self.critic.update_running(st);
                    }
                }
                self.actor_opt.step(self.actor.weights_mut(), &ga, lr)?;
                self.critic_opt.step(self.critic.weights_mut(), &gc, lr)?;
                if !self.actor.is_finite() || !self.critic.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "parameters after update (epoch {}, batch {bi}, step {t})",
                        self.epoch
                    )));
                }
                t += len;
            }
            let rec = TrainLogRecord {
                epoch: self.epoch,
                batch: bi,
                mean_reward: total_reward / (insts.len() * cfg.steps) as f64,
                mean_incumbent_cost: roll.states.iter().map(|s| s.incumbent_cost).sum::<f64>() / insts.len() as f64,
                lr,
                wall_time: self.started.elapsed().as_secs_f64(),
            };
            log::info!(
                "epoch {} batch {}: reward {:.5} incumbent {:.4}",
                rec.epoch,
                rec.batch,
                rec.mean_reward,
                rec.mean_incumbent_cost
            );
            on_record(&rec);
            log.push(rec);
        }
        self.epoch += 1;
        Ok(log)
    }
}

/// Everything a training run produced.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The most recent checkpoints, oldest first.
    pub recent: Vec<Checkpoint>,
    /// Files of the retained checkpoints when writing to disk.
    pub files: Vec<PathBuf>,
    pub log: Vec<TrainLogRecord>,
}

impl TrainOutcome {
    pub fn last(&self) -> &Checkpoint {
        self.recent.last().expect("at least one epoch")
    }
}

pub const LOG_FILE: &str = "train-log.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const SNAPSHOT_FILE: &str = "nonfinite-snapshot.ckpt";

pub fn checkpoint_file_name(epoch: usize) -> String {
    format!("epoch-{epoch:04}.ckpt")
}

/// Runs every epoch. With `out_dir`, appends the log to
/// `out_dir/train-log.jsonl` and writes `out_dir/checkpoints/epoch-NNNN.ckpt`
/// after each epoch; on a non-finite failure the last good networks go to
/// `out_dir/nonfinite-snapshot.ckpt`.
pub fn train(
    config: &TrainConfig,
    out_dir: Option<&Path>,
    mut on_record: impl FnMut(&TrainLogRecord),
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(*config)?;
    let mut log_file = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir.join(CHECKPOINT_DIR))?;
            Some(BufWriter::new(
                OpenOptions::new().create(true).write(true).truncate(true).open(dir.join(LOG_FILE))?,
            ))
        }
        None => None,
    };
    let mut outcome = TrainOutcome {
        recent: Vec::new(),
        files: Vec::new(),
        log: Vec::new(),
    };
    for _ in 0..config.epochs {
        let mut write_err = None;
        let res = trainer.run_epoch(|rec| {
            if let Some(f) = log_file.as_mut() {
                let r = serde_json::to_writer(&mut *f, rec)
                    .map_err(Error::from)
                    .and_then(|_| Ok(f.write_all(b"\n").and_then(|_| f.flush())?));
                if let Err(e) = r {
                    write_err.get_or_insert(e);
                }
            }
            on_record(rec);
        });
        if let Some(e) = write_err {
            return Err(e);
        }
        let records = match res {
            Ok(r) => r,
            Err(e @ Error::NonFinite(_)) => {
                if let Some(dir) = out_dir {
                    trainer.checkpoint().save(&dir.join(SNAPSHOT_FILE))?;
                    log::error!("{e}; snapshot written to {}", dir.join(SNAPSHOT_FILE).display());
                }
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        outcome.log.extend(records);
        let ckpt = trainer.checkpoint();
        if let Some(dir) = out_dir {
            let path = dir.join(CHECKPOINT_DIR).join(checkpoint_file_name(trainer.epoch()));
            ckpt.write_to(BufWriter::new(File::create(&path)?))?;
            outcome.files.push(path);
            if outcome.files.len() > config.keep_checkpoints {
                fs::remove_file(outcome.files.remove(0))?;
            }
        }
        outcome.recent.push(ckpt);
        if outcome.recent.len() > config.keep_checkpoints {
            outcome.recent.remove(0);
        }
    }
    Ok(outcome)
}
