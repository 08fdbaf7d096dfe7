use std::fmt;

use super::{Action, Instance, Operator, ProblemKind, Solution};

/// The first invariant a solution breaks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    WrongLength { expected: usize, found: usize },
    UnknownLocation { position: usize, location: usize },
    Duplicate { location: usize },
    Missing { location: usize },
    NoDepot,
    Overload { route: usize, depot_position: usize, load: u64, capacity: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::WrongLength { expected, found } => {
                write!(f, "sequence length {found}, expected {expected}")
            }
            Violation::UnknownLocation { position, location } => {
                write!(f, "position {position} holds unknown location {location}")
            }
            Violation::Duplicate { location } => write!(f, "location {location} visited twice"),
            Violation::Missing { location } => write!(f, "location {location} never visited"),
            Violation::NoDepot => write!(f, "CVRP sequence without a depot slot"),
            Violation::Overload {
                route,
                depot_position,
                load,
                capacity,
            } => write!(
                f,
                "route {route} (depot at position {depot_position}) carries {load} > capacity {capacity}"
            ),
        }
    }
}

/// One depot-delimited route of a CVRP sequence, read cyclically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Route {
    /// Position of the depot slot that opens the route.
    pub depot_position: usize,
    /// Number of customers on the route.
    pub customers: usize,
    pub load: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeasibilityReport {
    pub violation: Option<Violation>,
    pub routes: Vec<Route>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violation.is_none()
    }
}

/// Splits a CVRP sequence into routes, starting at the first depot slot and
/// wrapping around the end of the sequence.
pub fn routes(inst: &Instance, seq: &[usize]) -> Vec<Route> {
    let len = seq.len();
    let Some(first) = seq.iter().position(|&l| inst.is_depot(l)) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for k in 0..len {
        let p = (first + k) % len;
        let loc = seq[p];
        if inst.is_depot(loc) {
            out.push(Route {
                depot_position: p,
                customers: 0,
                load: 0,
            });
        } else {
            let r = out.last_mut().expect("first slot is a depot");
            r.customers += 1;
            r.load += u64::from(inst.demand(loc));
        }
    }
    out
}

pub fn check_feasible(inst: &Instance, sol: &Solution) -> FeasibilityReport {
    let seq = sol.seq();
    let mut report = FeasibilityReport {
        violation: None,
        routes: Vec::new(),
    };
    if seq.len() != inst.slots() {
        report.violation = Some(Violation::WrongLength {
            expected: inst.slots(),
            found: seq.len(),
        });
        return report;
    }
    let mut seen = vec![false; inst.num_locations()];
    for (position, &location) in seq.iter().enumerate() {
        if location >= inst.num_locations() {
            report.violation = Some(Violation::UnknownLocation { position, location });
            return report;
        }
        if inst.is_depot(location) {
            seen[location] = true;
            continue;
        }
        if seen[location] {
            report.violation = Some(Violation::Duplicate { location });
            return report;
        }
        seen[location] = true;
    }
    if let Some(location) = seen.iter().position(|s| !s) {
        report.violation = Some(if inst.is_depot(location) {
            Violation::NoDepot
        } else {
            Violation::Missing { location }
        });
        return report;
    }
    if inst.kind() == ProblemKind::Cvrp {
        report.routes = routes(inst, seq);
        let capacity = inst.capacity();
        if let Some((route, r)) = report
            .routes
            .iter()
            .enumerate()
            .find(|(_, r)| r.load > u64::from(capacity))
        {
            report.violation = Some(Violation::Overload {
                route,
                depot_position: r.depot_position,
                load: r.load,
                capacity,
            });
        }
    }
    report
}

/// True when every cyclic route of `seq` respects the capacity. Assumes the
/// sequence is otherwise a valid padded CVRP sequence.
pub fn capacity_ok(inst: &Instance, seq: &[usize]) -> bool {
    if inst.kind() == ProblemKind::Tsp {
        return true;
    }
    let cap = u64::from(inst.capacity());
    let Some(first) = seq.iter().position(|&l| inst.is_depot(l)) else {
        return false;
    };
    let len = seq.len();
    let mut load = 0u64;
    for k in 1..=len {
        let loc = seq[(first + k) % len];
        if inst.is_depot(loc) {
            load = 0;
        } else {
            load += u64::from(inst.demand(loc));
            if load > cap {
                return false;
            }
        }
    }
    true
}

/// Row-major `I x I` boolean matrix; `true` marks a selectable cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairMask {
    size: usize,
    cells: Vec<bool>,
}

impl PairMask {
    /// All off-diagonal cells selectable.
    pub fn off_diagonal(size: usize) -> Self {
        let mut cells = vec![true; size * size];
        for i in 0..size {
            cells[i * size + i] = false;
        }
        PairMask { size, cells }
    }

    pub fn none(size: usize) -> Self {
        PairMask {
            size,
            cells: vec![false; size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.size + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.cells[i * self.size + j] = value;
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn any(&self) -> bool {
        self.cells.iter().any(|&c| c)
    }

    /// Masks both orderings of the pair.
    pub fn forbid_pair(&mut self, a: Action) {
        self.set(a.i, a.j, false);
        self.set(a.j, a.i, false);
    }
}

/// Cell `(i, j)` is true iff applying `op` to `Action { i, j }` keeps the
/// solution feasible. The diagonal is always false.
pub fn feasibility_mask(inst: &Instance, sol: &Solution, op: Operator) -> PairMask {
    let size = sol.len();
    if inst.kind() == ProblemKind::Tsp {
        return PairMask::off_diagonal(size);
    }
    match op {
        Operator::TwoOpt => two_opt_mask(inst, sol.seq()),
        Operator::Swap | Operator::Relocate => {
            let mut mask = PairMask::none(size);
            let mut buf = sol.seq().to_vec();
            for i in 0..size {
                for j in 0..size {
                    if i == j || (op.is_symmetric() && j < i) {
                        continue;
                    }
                    buf.copy_from_slice(sol.seq());
                    op.apply_in_place(&mut buf, Action { i, j });
                    let ok = capacity_ok(inst, &buf);
                    mask.set(i, j, ok);
                    if op.is_symmetric() {
                        mask.set(j, i, ok);
                    }
                }
            }
            mask
        }
    }
}

/// Constant-time-per-pair 2-opt mask. Reversing `i..=j` keeps every route
/// strictly inside the segment intact; only the two routes cut by the
/// segment boundaries change, or they fuse into one when the segment holds
/// every depot slot.
fn two_opt_mask(inst: &Instance, seq: &[usize]) -> PairMask {
    let len = seq.len();
    let cap = u64::from(inst.capacity());
    let mut prefix = vec![0u64; len + 1];
    for (p, &loc) in seq.iter().enumerate() {
        prefix[p + 1] = prefix[p] + u64::from(inst.demand(loc));
    }
    // load over the position range lo..=hi, zero when empty
    let load = |lo: usize, hi: isize| -> u64 {
        if hi < lo as isize {
            0
        } else {
            prefix[hi as usize + 1] - prefix[lo]
        }
    };
    let is_depot: Vec<bool> = seq.iter().map(|&l| inst.is_depot(l)).collect();
    // first depot at position >= p, last depot at position <= p
    let mut next_ge = vec![usize::MAX; len + 1];
    for p in (0..len).rev() {
        next_ge[p] = if is_depot[p] { p } else { next_ge[p + 1] };
    }
    let mut prev_le = vec![usize::MAX; len];
    for p in 0..len {
        prev_le[p] = if is_depot[p] {
            p
        } else if p > 0 {
            prev_le[p - 1]
        } else {
            usize::MAX
        };
    }
    let total = prefix[len];

    let mut mask = PairMask::none(len);
    for i in 0..len {
        for j in i + 1..len {
            let first = next_ge[i];
            let ok = if first > j {
                true
            } else {
                let last = prev_le[j];
                let left_in = load(last + 1, j as isize);
                let right_in = load(i, first as isize - 1);
                let depot_before = if i > 0 { prev_le[i - 1] } else { usize::MAX };
                let depot_after = next_ge[j + 1];
                let outside_depot = depot_before != usize::MAX || depot_after != usize::MAX;
                if !outside_depot {
                    let outside = total - load(i, j as isize);
                    outside + left_in + right_in <= cap
                } else {
                    let left_out = if depot_before != usize::MAX {
                        load(depot_before + 1, i as isize - 1)
                    } else {
                        // wraps: customers after the last depot past j, then 0..i
                        let d = prev_le[len - 1];
                        load(0, i as isize - 1) + load(d + 1, len as isize - 1)
                    };
                    let right_out = if depot_after != usize::MAX {
                        load(j + 1, depot_after as isize - 1)
                    } else {
                        let d = next_ge[0];
                        load(j + 1, len as isize - 1) + load(0, d as isize - 1)
                    };
                    left_out + left_in <= cap && right_in + right_out <= cap
                }
            };
            mask.set(i, j, ok);
            mask.set(j, i, ok);
        }
    }
    mask
}
