//! Central finite-difference verification of the analytic gradients.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Batch, NetConfig, Network, NormMode, Role};
use crate::error::Result;
use crate::routing::{Action, PairMask, ProblemKind};

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub kind: ProblemKind,
    pub d_model: usize,
    /// Positions per sequence.
    pub len: usize,
    /// Sequences per batch; more than one exercises batch-norm coupling in
    /// training mode.
    pub batch: usize,
    pub mode: NormMode,
    pub step: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    pub seed: u64,
    /// Flips the sign of the first tensor's analytic gradient.
    pub inject_fault: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            kind: ProblemKind::Tsp,
            d_model: 8,
            len: 6,
            batch: 1,
            mode: NormMode::Eval,
            step: 1e-5,
            floor: 1e-5,
            seed: 0,
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorReport {
    pub name: String,
    pub entries: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Entries skipped because the two probes straddle a ReLU or max-pool
    /// switch.
    pub kinks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub role: Role,
    pub mode: NormMode,
    pub tensors: Vec<TensorReport>,
}

impl GradReport {
    pub fn max_rel_err(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&TensorReport> {
        self.tensors
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

struct Problem {
    batch: Batch,
    masks: Vec<PairMask>,
    actions: Vec<Action>,
    weights: Vec<f64>,
}

impl Problem {
    fn random(cfg: &GradCheckConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let f = cfg.kind.feature_dim();
        let items: Vec<Array2<f64>> = (0..cfg.batch)
            .map(|_| Array2::from_shape_fn((cfg.len, f), |_| rng.gen()))
            .collect();
        let mut masks = Vec::new();
        let mut actions = Vec::new();
        for _ in 0..cfg.batch {
            let mut mask = PairMask::off_diagonal(cfg.len);
            let i = rng.gen_range(0..cfg.len);
            let j = (i + rng.gen_range(1..cfg.len)) % cfg.len;
            mask.forbid_pair(Action { i, j });
            let a = loop {
                let a = Action {
                    i: rng.gen_range(0..cfg.len),
                    j: rng.gen_range(0..cfg.len),
                };
                if mask.get(a.i, a.j) {
                    break a;
                }
            };
            masks.push(mask);
            actions.push(a);
        }
        let weights = (0..cfg.batch).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Ok(Problem {
            batch: Batch::new(&items)?,
            masks,
            actions,
            weights,
        })
    }

    /// Objective value and the kink pattern of the forward pass.
    fn objective(&self, net: &Network, mode: NormMode) -> Result<(f64, Vec<usize>)> {
        match net.role() {
            Role::Actor => {
                let out = net.actor_forward(&self.batch, &self.masks, mode)?;
                let mut total = 0.0;
                for ((d, &a), w) in out.dists.iter().zip(&self.actions).zip(&self.weights) {
                    total += w * d.log_prob(a)?;
                }
                Ok((total, out.kink_pattern()))
            }
            Role::Critic => {
                let out = net.critic_forward(&self.batch, mode)?;
                let total = out.values.iter().zip(&self.weights).map(|(v, w)| v * w).sum();
                Ok((total, out.kink_pattern()))
            }
        }
    }

    fn gradient(&self, net: &Network, mode: NormMode) -> Result<Vec<f64>> {
        let mut grad = net.zero_grad();
        match net.role() {
            Role::Actor => {
                let out = net.actor_forward(&self.batch, &self.masks, mode)?;
                net.actor_backward(&out, &self.actions, &self.weights, &mut grad)?;
            }
            Role::Critic => {
                let out = net.critic_forward(&self.batch, mode)?;
                net.critic_backward(&out, &self.weights, &mut grad)?;
            }
        }
        Ok(grad)
    }
}

/// Compares analytic and finite-difference gradients for every weight of a
/// freshly initialized `role` network.
pub fn check(role: Role, cfg: &GradCheckConfig) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let config = NetConfig::with_width(cfg.kind.feature_dim(), cfg.d_model);
    let mut net = Network::new(config, role, &mut rng)?;
    let problem = Problem::random(cfg, &mut rng)?;
    for _ in 0..3 {
        let warm = Problem::random(cfg, &mut rng)?;
        let stats = match role {
            Role::Actor => net.actor_forward(&warm.batch, &warm.masks, NormMode::Train)?.stats,
            Role::Critic => net.critic_forward(&warm.batch, NormMode::Train)?.stats,
        };
        net.update_running(&stats.expect("training mode"));
    }

    let mut analytic = problem.gradient(&net, cfg.mode)?;
    if cfg.inject_fault {
        let spec = &net.tensors()[0];
        analytic[spec.offset..spec.offset + spec.rows * spec.cols]
            .iter_mut()
            .for_each(|g| *g = -*g);
    }

    let specs = net.tensors().to_vec();
    let mut tensors = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut report = TensorReport {
            name: spec.name.clone(),
            entries: spec.rows * spec.cols,
            max_rel_err: 0.0,
            max_abs_err: 0.0,
            kinks: 0,
        };
        for k in spec.offset..spec.offset + spec.rows * spec.cols {
            let orig = net.weights()[k];
            net.weights_mut()[k] = orig + cfg.step;
            let (plus, p_plus) = problem.objective(&net, cfg.mode)?;
            net.weights_mut()[k] = orig - cfg.step;
            let (minus, p_minus) = problem.objective(&net, cfg.mode)?;
            net.weights_mut()[k] = orig;
            if p_plus != p_minus {
                report.kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * cfg.step);
            let a = analytic[k];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(cfg.floor);
            report.max_abs_err = report.max_abs_err.max(abs);
            report.max_rel_err = report.max_rel_err.max(rel);
        }
        tensors.push(report);
    }
    Ok(GradReport {
        role,
        mode: cfg.mode,
        tensors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn injected_fault_is_detected() {
        let cfg = GradCheckConfig {
            d_model: 4,
            len: 4,
            inject_fault: true,
            ..Default::default()
        };
        let report = check(Role::Critic, &cfg).unwrap();
        assert!(report.max_rel_err() > 1e-4);
        assert_eq!(report.worst().unwrap().name, "embed.weight");
    }

    #[test]
    fn small_actor_and_critic_pass_in_both_modes() {
        for mode in [NormMode::Eval, NormMode::Train] {
            for role in [Role::Actor, Role::Critic] {
                let cfg = GradCheckConfig {
                    d_model: 4,
                    len: 5,
                    batch: 2,
                    mode,
                    kind: ProblemKind::Cvrp,
                    ..Default::default()
                };
                let r = check(role, &cfg).unwrap();
                assert!(r.max_rel_err() <= 1e-4, "{role:?} {mode:?} {:?}", r.worst());
            }
        }
    }
}
