//! The improvement loop: always-accept stepping under a pair-picking policy
//! for a fixed number of steps, with the incumbent tracked separately.

mod baseline;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use baseline::{
    best_improvement_pick, candidate_pairs, descend, first_improvement_pick, PickRule, IMPROVEMENT_TOL, TIE_TOL,
};

use crate::error::{Error, Result};
use crate::io::initial_random;
use crate::net::{node_features_with, Batch, Network, NormMode, PairDistribution};
use crate::par;
use crate::routing::{
    capacity_ok, feasibility_mask, tour_length, Action, Instance, Operator, PairMask, Point, ProblemKind, Solution,
};

/// Current solution, incumbent and step counter of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchState {
    pub current: Solution,
    pub current_cost: f64,
    pub incumbent: Solution,
    pub incumbent_cost: f64,
    pub prev_action: Option<Action>,
    pub step: usize,
}

impl SearchState {
    pub fn new(inst: &Instance, initial: Solution) -> Result<Self> {
        let cost = tour_length(inst, &initial)?;
        Ok(SearchState {
            current: initial.clone(),
            current_cost: cost,
            incumbent: initial,
            incumbent_cost: cost,
            prev_action: None,
            step: 0,
        })
    }
}

/// What a policy does at one step.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Move(Action),
    /// Replace the current solution (the incumbent is kept).
    Restart(Solution),
}

/// Advances `state` by one step and returns the reward
/// `f(s*) - min(f(s*), f(s'))`. The new solution is always accepted.
pub fn step(inst: &Instance, state: &mut SearchState, decision: Decision, op: Operator) -> Result<f64> {
    let (next, prev) = match decision {
        Decision::Move(a) => {
            let next = op.apply(&state.current, a)?;
            if inst.kind() == ProblemKind::Cvrp && !capacity_ok(inst, next.seq()) {
                return Err(Error::InfeasibleSolution(format!("{op} move ({}, {}) overloads a route", a.i, a.j)));
            }
            (next, Some(a))
        }
        Decision::Restart(sol) => {
            if sol.len() != state.current.len() {
                return Err(Error::LengthMismatch {
                    what: "restart solution",
                    left: sol.len(),
                    right: state.current.len(),
                });
            }
            (sol, None)
        }
    };
    let cost = inst.sequence_cost(next.seq());
    let reward = state.incumbent_cost - state.incumbent_cost.min(cost);
    if cost < state.incumbent_cost {
        state.incumbent = next.clone();
        state.incumbent_cost = cost;
    }
    state.current = next;
    state.current_cost = cost;
    state.prev_action = prev;
    state.step += 1;
    Ok(reward)
}

/// A random feasible solution (the restart move of the baselines).
pub fn restart_solution<R: Rng + ?Sized>(inst: &Instance, rng: &mut R) -> Result<Solution> {
    initial_random(inst, rng)
}

/// The policy driving a run.
#[derive(Debug, Clone)]
pub enum Policy {
    Learned(Arc<Network>),
    /// First improving pair, random restart at a local optimum.
    FirstImprovement,
    /// Best improving pair, random restart at a local optimum.
    BestImprovement,
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Learned(_) => "learned",
            Policy::FirstImprovement => "first-improvement",
            Policy::BestImprovement => "best-improvement",
        }
    }

    /// Baseline by name.
    pub fn baseline(name: &str) -> Option<Self> {
        match name {
            "first-improvement" | "first" | "fi" => Some(Policy::FirstImprovement),
            "best-improvement" | "best" | "bi" => Some(Policy::BestImprovement),
            _ => None,
        }
    }

    /// One decision for one instance. `features` overrides the coordinates
    /// fed to a learned policy.
    pub fn decide<R: Rng + ?Sized>(
        &self,
        inst: &Instance,
        features: Option<&[Point]>,
        state: &SearchState,
        op: Operator,
        rng: &mut R,
    ) -> Result<Decision> {
        let rule = match self {
            Policy::Learned(net) => {
                let mask = policy_mask(inst, state, op);
                let x = node_features_with(inst, &state.current, features.unwrap_or(inst.coords()));
                let out = net.actor_forward(&Batch::single(x)?, &[mask], NormMode::Eval)?;
                return Ok(Decision::Move(sample(&out.dists[0], op, rng)));
            }
            Policy::FirstImprovement => PickRule::First,
            Policy::BestImprovement => PickRule::Best,
        };
        Ok(match rule.pick(inst, &state.current, op) {
            Some(a) => Decision::Move(a),
            None => Decision::Restart(restart_solution(inst, rng)?),
        })
    }
}

/// Feasible pairs minus the previous action; the previous-action mask is
/// dropped when nothing else is left.
pub fn policy_mask(inst: &Instance, state: &SearchState, op: Operator) -> PairMask {
    let mut mask = feasibility_mask(inst, &state.current, op);
    if let Some(prev) = state.prev_action {
        let mut without = mask.clone();
        without.forbid_pair(prev);
        if without.any() {
            mask = without;
        } else {
            log::debug!("step {}: keeping previous action ({}, {}) selectable", state.step, prev.i, prev.j);
        }
    }
    mask
}

fn sample<R: Rng + ?Sized>(dist: &PairDistribution, op: Operator, rng: &mut R) -> Action {
    let cell = dist.sample_cell(rng);
    if op.is_symmetric() {
        cell.canonical()
    } else {
        cell
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: usize,
    pub current_cost: f64,
    pub incumbent_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub best: Solution,
    pub best_cost: f64,
    pub initial_cost: f64,
    /// Undiscounted sum of step rewards.
    pub total_reward: f64,
    pub restarts: usize,
    /// Step 0 (the initial solution) followed by one point per step.
    pub trace: Vec<TracePoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub op: Operator,
    /// Step limit T.
    pub steps: usize,
    pub record_trace: bool,
}

impl RunConfig {
    pub fn new(steps: usize) -> Self {
        RunConfig {
            op: Operator::TwoOpt,
            steps,
            record_trace: false,
        }
    }
}

/// One run to solve: instance, start solution, seed of its random stream and
/// optional rescaled coordinates for the policy input.
#[derive(Debug, Clone)]
pub struct Task<'a> {
    pub inst: &'a Instance,
    pub initial: Solution,
    pub seed: u64,
    pub features: Option<&'a [Point]>,
}

impl<'a> Task<'a> {
    pub fn new(inst: &'a Instance, initial: Solution, seed: u64) -> Self {
        Task {
            inst,
            initial,
            seed,
            features: None,
        }
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

struct Runner {
    state: SearchState,
    initial_cost: f64,
    total_reward: f64,
    restarts: usize,
    trace: Vec<TracePoint>,
    rng: ChaCha8Rng,
}

impl Runner {
    fn new(task: &Task, cfg: &RunConfig) -> Result<Self> {
        let state = SearchState::new(task.inst, task.initial.clone())?;
        let mut trace = Vec::new();
        if cfg.record_trace {
            trace.reserve(cfg.steps + 1);
            trace.push(TracePoint {
                step: 0,
                current_cost: state.current_cost,
                incumbent_cost: state.incumbent_cost,
            });
        }
        Ok(Runner {
            initial_cost: state.current_cost,
            state,
            total_reward: 0.0,
            restarts: 0,
            trace,
            rng: task.rng(),
        })
    }

    fn apply(&mut self, inst: &Instance, decision: Decision, cfg: &RunConfig) -> Result<()> {
        if matches!(decision, Decision::Restart(_)) {
            self.restarts += 1;
        }
        self.total_reward += step(inst, &mut self.state, decision, cfg.op)?;
        if cfg.record_trace {
            self.trace.push(TracePoint {
                step: self.state.step,
                current_cost: self.state.current_cost,
                incumbent_cost: self.state.incumbent_cost,
            });
        }
        Ok(())
    }

    fn finish(self) -> RunResult {
        RunResult {
            best: self.state.incumbent,
            best_cost: self.state.incumbent_cost,
            initial_cost: self.initial_cost,
            total_reward: self.total_reward,
            restarts: self.restarts,
            trace: self.trace,
        }
    }
}

/// Runs `cfg.steps` steps of `policy` from `task.initial`.
pub fn run_improvement(task: &Task, policy: &Policy, cfg: &RunConfig) -> Result<RunResult> {
    let mut runner = Runner::new(task, cfg)?;
    for _ in 0..cfg.steps {
        let d = policy.decide(task.inst, task.features, &runner.state, cfg.op, &mut runner.rng)?;
        runner.apply(task.inst, d, cfg)?;
    }
    Ok(runner.finish())
}

/// Learned-policy runs advance in lockstep in groups of this many, one
/// batched forward pass per step.
pub const LOCKSTEP_GROUP: usize = 32;

/// Runs every task; results are in task order and do not depend on the
/// parallel mode. Learned-policy runs share batched forward passes.
pub fn run_many(tasks: &[Task], policy: &Policy, cfg: &RunConfig) -> Result<Vec<RunResult>> {
    match policy {
        Policy::Learned(net) => {
            let groups = lockstep_groups(tasks);
            let results = par::map(&groups, |g| run_lockstep(net, g, cfg));
            let mut out: Vec<Option<RunResult>> = vec![None; tasks.len()];
            for (g, r) in groups.iter().zip(results) {
                for (&k, res) in g.iter().map(|(k, _)| k).zip(r?) {
                    out[k] = Some(res);
                }
            }
            Ok(out.into_iter().map(|r| r.expect("every task run")).collect())
        }
        _ => par::try_map_range(tasks.len(), |k| run_improvement(&tasks[k], policy, cfg)),
    }
}

/// Consecutive tasks of equal sequence length, at most [`LOCKSTEP_GROUP`]
/// per group.
fn lockstep_groups<'t, 'a>(tasks: &'t [Task<'a>]) -> Vec<Vec<(usize, &'t Task<'a>)>> {
    let mut groups: Vec<Vec<(usize, &Task)>> = Vec::new();
    for (k, t) in tasks.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if g.len() < LOCKSTEP_GROUP && g[0].1.initial.len() == t.initial.len() => g.push((k, t)),
            _ => groups.push(vec![(k, t)]),
        }
    }
    groups
}

fn run_lockstep(net: &Network, group: &[(usize, &Task)], cfg: &RunConfig) -> Result<Vec<RunResult>> {
    let mut runners = group
        .iter()
        .map(|(_, t)| Runner::new(t, cfg))
        .collect::<Result<Vec<_>>>()?;
    for _ in 0..cfg.steps {
        let mut xs = Vec::with_capacity(group.len());
        let mut masks = Vec::with_capacity(group.len());
        for ((_, t), r) in group.iter().zip(&runners) {
            xs.push(node_features_with(t.inst, &r.state.current, t.features.unwrap_or(t.inst.coords())));
            masks.push(policy_mask(t.inst, &r.state, cfg.op));
        }
        let out = net.actor_forward(&Batch::new(&xs)?, &masks, NormMode::Eval)?;
        for (((_, t), r), dist) in group.iter().zip(runners.iter_mut()).zip(&out.dists) {
            let a = sample(dist, cfg.op, &mut r.rng);
            r.apply(t.inst, Decision::Move(a), cfg)?;
        }
    }
    Ok(runners.into_iter().map(Runner::finish).collect())
}

/// Best of several runs of one policy with different seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiRunResult {
    pub runs: Vec<RunResult>,
    /// Index of the first run reaching the lowest cost.
    pub best_index: usize,
}

impl MultiRunResult {
    fn from_runs(runs: Vec<RunResult>) -> Result<Self> {
        let best_index = runs
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.best_cost.total_cmp(&b.1.best_cost).then(a.0.cmp(&b.0)))
            .map(|(k, _)| k)
            .ok_or_else(|| Error::Config("at least one run is required".into()))?;
        Ok(MultiRunResult { runs, best_index })
    }

    pub fn best(&self) -> &RunResult {
        &self.runs[self.best_index]
    }

    /// Best cost among the first `k` runs.
    pub fn best_of_first(&self, k: usize) -> f64 {
        self.runs[..k].iter().map(|r| r.best_cost).fold(f64::INFINITY, f64::min)
    }
}

/// Repeats `policy` once per seed from the same start.
pub fn multi_run(task: &Task, policy: &Policy, cfg: &RunConfig, seeds: &[u64]) -> Result<MultiRunResult> {
    let tasks: Vec<Task> = seeds.iter().map(|&seed| Task { seed, ..task.clone() }).collect();
    let runs = match policy {
        Policy::Learned(_) => tasks
            .iter()
            .map(|t| run_improvement(t, policy, cfg))
            .collect::<Result<Vec<_>>>()?,
        _ => run_many(&tasks, policy, cfg)?,
    };
    MultiRunResult::from_runs(runs)
}

/// Runs each policy (typically late-epoch checkpoints) once from the same
/// start with the same seed.
pub fn multi_policy(task: &Task, policies: &[Policy], cfg: &RunConfig) -> Result<MultiRunResult> {
    let runs = par::try_map_range(policies.len(), |k| run_improvement(task, &policies[k], cfg))?;
    MultiRunResult::from_runs(runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{NetConfig, Role};
    use crate::routing::check_feasible;
    use crate::testutil::{random_cvrp, random_tsp};

    fn small_net(f: usize, seed: u64) -> Arc<Network> {
        Arc::new(Network::new(NetConfig::with_width(f, 8), Role::Actor, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap())
    }

    #[test]
    fn reward_examples() {
        let inst = Instance::tsp(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        let mut st = SearchState::new(&inst, Solution::new(vec![0, 1, 2, 3])).unwrap();
        let before = st.incumbent_cost;
        let r = step(&inst, &mut st, Decision::Move(Action { i: 2, j: 3 }), Operator::TwoOpt).unwrap();
        assert!((r - (before - 4.0)).abs() < 1e-12);
        assert_eq!(st.incumbent.seq(), &[0, 1, 3, 2]);
        let r = step(&inst, &mut st, Decision::Move(Action { i: 2, j: 3 }), Operator::TwoOpt).unwrap();
        assert_eq!(r, 0.0);
        assert_eq!(st.incumbent_cost, 4.0);
        assert!(st.current_cost > 4.0);
        assert_eq!(st.step, 2);
    }

    #[test]
    fn infeasible_move_is_an_error() {
        let coords = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];
        let inst = Instance::cvrp(coords, vec![0, 5, 5, 5, 5], 10, 0, 6).unwrap();
        let mut st = SearchState::new(&inst, Solution::new(vec![0, 1, 2, 0, 3, 4])).unwrap();
        let before = st.clone();
        let r = step(&inst, &mut st, Decision::Move(Action { i: 3, j: 4 }), Operator::Swap);
        assert!(matches!(r, Err(Error::InfeasibleSolution(_))));
        assert_eq!(st, before);
    }

    #[test]
    fn traces_are_monotone_and_rewards_telescope() {
        let inst = random_cvrp(8, 20, 16, 1);
        let init = initial_random(&inst, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let cfg = RunConfig {
            record_trace: true,
            ..RunConfig::new(60)
        };
        for policy in [Policy::Learned(small_net(7, 2)), Policy::FirstImprovement, Policy::BestImprovement] {
            for op in [Operator::TwoOpt, Operator::Swap, Operator::Relocate] {
                let cfg = RunConfig { op, ..cfg };
                let r = run_improvement(&Task::new(&inst, init.clone(), 9), &policy, &cfg).unwrap();
                assert_eq!(r.trace.len(), 61);
                assert!(r.trace.windows(2).all(|w| w[1].incumbent_cost <= w[0].incumbent_cost));
                assert!((r.total_reward - (r.initial_cost - r.best_cost)).abs() < 1e-9);
                assert!(check_feasible(&inst, &r.best).is_feasible());
                assert!((tour_length(&inst, &r.best).unwrap() - r.best_cost).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn learned_policy_never_repeats_previous_action() {
        let inst = random_tsp(6, 3);
        let net = small_net(2, 5);
        let policy = Policy::Learned(net);
        let mut st = SearchState::new(&inst, Solution::new((0..6).collect())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..300 {
            let d = policy.decide(&inst, None, &st, Operator::TwoOpt, &mut rng).unwrap();
            if let (Decision::Move(a), Some(p)) = (&d, st.prev_action) {
                assert!(!a.same_pair(p));
            }
            step(&inst, &mut st, d, Operator::TwoOpt).unwrap();
        }
    }

    #[test]
    fn lockstep_matches_single_runs() {
        let insts: Vec<_> = (0..5).map(|s| random_tsp(7, s)).collect();
        let tasks: Vec<_> = insts
            .iter()
            .enumerate()
            .map(|(k, i)| Task::new(i, Solution::new((0..7).collect()), k as u64))
            .collect();
        let policy = Policy::Learned(small_net(2, 7));
        let cfg = RunConfig::new(40);
        let batched = run_many(&tasks, &policy, &cfg).unwrap();
        for (t, b) in tasks.iter().zip(&batched) {
            assert_eq!(&run_improvement(t, &policy, &cfg).unwrap(), b);
        }
    }

    #[test]
    fn multi_run_is_min_and_monotone() {
        let inst = random_tsp(10, 8);
        let task = Task::new(&inst, Solution::new((0..10).collect()), 0);
        let cfg = RunConfig::new(30);
        let policy = Policy::Learned(small_net(2, 1));
        let seeds: Vec<u64> = (0..6).collect();
        let m = multi_run(&task, &policy, &cfg, &seeds).unwrap();
        let single = run_improvement(&Task { seed: 0, ..task.clone() }, &policy, &cfg).unwrap();
        assert_eq!(m.runs[0], single);
        for k in 1..seeds.len() {
            assert!(m.best_of_first(k + 1) <= m.best_of_first(k));
        }
        assert!(m.runs.iter().all(|r| m.best().best_cost <= r.best_cost));
        let one = multi_run(&task, &policy, &cfg, &[0]).unwrap();
        assert_eq!(one.best(), &single);
    }

    #[test]
    fn baselines_restart_at_local_optima() {
        let inst = random_tsp(8, 2);
        let task = Task::new(&inst, Solution::new((0..8).collect()), 3);
        let r = run_improvement(&task, &Policy::BestImprovement, &RunConfig::new(200)).unwrap();
        assert!(r.restarts > 0);
        let opt = crate::io::exact_tsp(&inst).unwrap().0;
        assert!(r.best_cost >= opt - 1e-9);
    }
}
