use crate::error::Result;
use crate::routing::{feasibility_mask, two_opt_delta, Action, Instance, Operator, PairMask, ProblemKind, Solution};

/// A move must lower the cost by more than this to count as improving.
pub const IMPROVEMENT_TOL: f64 = 1e-9;
/// Best-improvement candidates within this of the current best are ties,
/// resolved in favour of the lexicographically smaller pair.
pub const TIE_TOL: f64 = 1e-12;

/// Candidate pairs in lexicographic order: `i < j` for symmetric operators,
/// every ordered pair for relocation.
pub fn candidate_pairs(len: usize, op: Operator) -> impl Iterator<Item = Action> {
    (0..len).flat_map(move |i| {
        (0..len)
            .filter(move |&j| if op.is_symmetric() { j > i } else { j != i })
            .map(move |j| Action { i, j })
    })
}

struct Scanner<'a> {
    inst: &'a Instance,
    seq: &'a [usize],
    cost: f64,
    op: Operator,
    mask: Option<PairMask>,
    buf: Vec<usize>,
}

impl<'a> Scanner<'a> {
    fn new(inst: &'a Instance, sol: &'a Solution, op: Operator) -> Self {
        let mask = (inst.kind() == ProblemKind::Cvrp).then(|| feasibility_mask(inst, sol, op));
        Scanner {
            inst,
            seq: sol.seq(),
            cost: inst.sequence_cost(sol.seq()),
            op,
            mask,
            buf: sol.seq().to_vec(),
        }
    }

    /// Cost change of a feasible move, `None` when masked out.
    fn delta(&mut self, a: Action) -> Option<f64> {
        if let Some(m) = &self.mask {
            if !m.get(a.i, a.j) {
                return None;
            }
        }
        Some(match self.op {
            Operator::TwoOpt => two_opt_delta(self.inst, self.seq, a.i, a.j),
            _ => {
                self.buf.copy_from_slice(self.seq);
                self.op.apply_in_place(&mut self.buf, a);
                self.inst.sequence_cost(&self.buf) - self.cost
            }
        })
    }
}

/// First strictly improving pair in lexicographic order, `None` at a local
/// optimum.
pub fn first_improvement_pick(inst: &Instance, sol: &Solution, op: Operator) -> Option<Action> {
    let mut s = Scanner::new(inst, sol, op);
    candidate_pairs(sol.len(), op).find(|&a| s.delta(a).is_some_and(|d| d < -IMPROVEMENT_TOL))
}

/// Pair with the largest strict improvement, ties to the lexicographically
/// first; `None` at a local optimum.
pub fn best_improvement_pick(inst: &Instance, sol: &Solution, op: Operator) -> Option<Action> {
    let mut s = Scanner::new(inst, sol, op);
    let mut best: Option<(f64, Action)> = None;
    for a in candidate_pairs(sol.len(), op) {
        if let Some(d) = s.delta(a) {
            if d < -IMPROVEMENT_TOL && best.is_none_or(|(bd, _)| d < bd - TIE_TOL) {
                best = Some((d, a));
            }
        }
    }
    best.map(|(_, a)| a)
}

/// Which hand-crafted rule to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PickRule {
    First,
    Best,
}

impl PickRule {
    pub fn pick(self, inst: &Instance, sol: &Solution, op: Operator) -> Option<Action> {
        match self {
            PickRule::First => first_improvement_pick(inst, sol, op),
            PickRule::Best => best_improvement_pick(inst, sol, op),
        }
    }
}

/// Applies `rule` until no improving pair is left.
pub fn descend(inst: &Instance, start: &Solution, op: Operator, rule: PickRule) -> Result<Solution> {
    let mut sol = start.clone();
    while let Some(a) = rule.pick(inst, &sol, op) {
        sol = op.apply(&sol, a)?;
    }
    Ok(sol)
}
