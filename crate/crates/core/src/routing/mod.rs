//! Problem instances, solution sequences and the pairwise local operators.
//!
//! A solution is a fixed-length sequence of location indices evaluated as a
//! closed tour. CVRP solutions carry extra depot slots ("dummy depots") so
//! that every solution of an instance has the same length.

mod feasibility;
mod ops;

pub use feasibility::{
    capacity_ok, check_feasible, feasibility_mask, routes, FeasibilityReport, PairMask, Route,
    Violation,
};
pub use ops::{
    apply_node_swap, apply_relocation, apply_two_opt, two_opt_delta, Action, Operator,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Tsp,
    Cvrp,
}

impl ProblemKind {
    /// Width of a node feature row fed to the policy network.
    pub fn feature_dim(self) -> usize {
        match self {
            ProblemKind::Tsp => 2,
            ProblemKind::Cvrp => 7,
        }
    }
}

impl std::fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProblemKind::Tsp => f.write_str("tsp"),
            ProblemKind::Cvrp => f.write_str("cvrp"),
        }
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsp" => Ok(ProblemKind::Tsp),
            "cvrp" => Ok(ProblemKind::Cvrp),
            other => Err(Error::Config(format!("unknown problem kind `{other}`"))),
        }
    }
}

/// Distance function between two locations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Exact real-valued Euclidean distance.
    #[default]
    Euclidean,
    /// Euclidean distance rounded to the nearest integer (TSPLIB `EUC_2D`).
    RoundedEuclidean,
}

/// An immutable TSP or CVRP instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    kind: ProblemKind,
    coords: Vec<Point>,
    #[serde(default)]
    demands: Vec<u32>,
    #[serde(default)]
    capacity: u32,
    #[serde(default)]
    depot: usize,
    slots: usize,
    #[serde(default)]
    metric: Metric,
}

/// Default padded sequence length for a CVRP with `n` customers.
pub fn default_cvrp_slots(n: usize) -> usize {
    match n {
        20 => 40,
        50 => 100,
        100 => 125,
        _ => 2 * n,
    }
}

impl Instance {
    pub fn tsp(coords: Vec<Point>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidInstance("TSP needs at least one node".into()));
        }
        check_coords(&coords)?;
        let slots = coords.len();
        Ok(Instance {
            kind: ProblemKind::Tsp,
            coords,
            demands: Vec::new(),
            capacity: 0,
            depot: 0,
            slots,
            metric: Metric::Euclidean,
        })
    }

    /// Builds a CVRP instance. `coords` and `demands` include the depot.
    pub fn cvrp(
        coords: Vec<Point>,
        demands: Vec<u32>,
        capacity: u32,
        depot: usize,
        slots: usize,
    ) -> Result<Self> {
        check_coords(&coords)?;
        if coords.len() < 2 {
            return Err(Error::InvalidInstance(
                "CVRP needs a depot and at least one customer".into(),
            ));
        }
        if demands.len() != coords.len() {
            return Err(Error::LengthMismatch {
                what: "demands vs coordinates",
                left: demands.len(),
                right: coords.len(),
            });
        }
        if depot >= coords.len() {
            return Err(Error::InvalidInstance(format!("depot index {depot} out of range")));
        }
        if capacity == 0 {
            return Err(Error::InvalidInstance("capacity must be positive".into()));
        }
        if demands[depot] != 0 {
            return Err(Error::InvalidInstance("depot demand must be 0".into()));
        }
        if let Some((v, d)) = demands.iter().enumerate().find(|(_, &d)| d > capacity) {
            return Err(Error::InvalidInstance(format!(
                "customer {v} demand {d} exceeds capacity {capacity}"
            )));
        }
        let n = coords.len() - 1;
        if slots < n + 1 {
            return Err(Error::InvalidInstance(format!(
                "padded length {slots} cannot hold {n} customers and a depot"
            )));
        }
        Ok(Instance {
            kind: ProblemKind::Cvrp,
            coords,
            demands,
            capacity,
            depot,
            slots,
            metric: Metric::Euclidean,
        })
    }

    /// Re-runs the constructor checks, e.g. after deserialization.
    pub fn validated(self) -> Result<Self> {
        let (metric, slots) = (self.metric, self.slots);
        let checked = match self.kind {
            ProblemKind::Tsp => Instance::tsp(self.coords)?.with_slots(slots)?,
            ProblemKind::Cvrp => Instance::cvrp(self.coords, self.demands, self.capacity, self.depot, slots)?,
        };
        Ok(checked.with_metric(metric))
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    /// Same instance with a different CVRP padding length.
    pub fn with_slots(mut self, slots: usize) -> Result<Self> {
        match self.kind {
            ProblemKind::Tsp if slots != self.coords.len() => Err(Error::InvalidInstance(
                "TSP sequence length is fixed to n".into(),
            )),
            ProblemKind::Cvrp if slots < self.coords.len() => Err(Error::InvalidInstance(
                format!("padded length {slots} too short"),
            )),
            _ => {
                self.slots = slots;
                Ok(self)
            }
        }
    }

    /// Copy of the instance with replaced coordinates (same length).
    pub fn with_coords(&self, coords: Vec<Point>) -> Result<Self> {
        if coords.len() != self.coords.len() {
            return Err(Error::LengthMismatch {
                what: "coordinates",
                left: coords.len(),
                right: self.coords.len(),
            });
        }
        check_coords(&coords)?;
        let mut out = self.clone();
        out.coords = coords;
        Ok(out)
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn demands(&self) -> &[u32] {
        &self.demands
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn depot(&self) -> Option<usize> {
        match self.kind {
            ProblemKind::Tsp => None,
            ProblemKind::Cvrp => Some(self.depot),
        }
    }

    /// Number of customer nodes `n`.
    pub fn num_customers(&self) -> usize {
        match self.kind {
            ProblemKind::Tsp => self.coords.len(),
            ProblemKind::Cvrp => self.coords.len() - 1,
        }
    }

    pub fn num_locations(&self) -> usize {
        self.coords.len()
    }

    /// Solution length `I` (`n` for TSP, the padded `I*` for CVRP).
    pub fn slots(&self) -> usize {
        self.slots
    }

    #[inline]
    pub fn is_depot(&self, loc: usize) -> bool {
        self.kind == ProblemKind::Cvrp && loc == self.depot
    }

    #[inline]
    pub fn demand(&self, loc: usize) -> u32 {
        match self.kind {
            ProblemKind::Tsp => 0,
            ProblemKind::Cvrp => self.demands[loc],
        }
    }

    #[inline]
    pub fn dist(&self, a: usize, b: usize) -> f64 {
        let [ax, ay] = self.coords[a];
        let [bx, by] = self.coords[b];
        let d = (ax - bx).hypot(ay - by);
        match self.metric {
            Metric::Euclidean => d,
            Metric::RoundedEuclidean => (d + 0.5).floor(),
        }
    }

    /// Closed-tour cost of a sequence without any feasibility check.
    pub fn sequence_cost(&self, seq: &[usize]) -> f64 {
        if seq.len() < 2 {
            return 0.0;
        }
        let mut total = 0.0;
        for w in seq.windows(2) {
            total += self.dist(w[0], w[1]);
        }
        total + self.dist(seq[seq.len() - 1], seq[0])
    }
}

fn check_coords(coords: &[Point]) -> Result<()> {
    if let Some(i) = coords.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::InvalidInstance(format!("coordinate {i} is not finite")));
    }
    Ok(())
}

/// A solution sequence of location indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Solution {
    seq: Vec<usize>,
}

impl Solution {
    pub fn new(seq: Vec<usize>) -> Self {
        Solution { seq }
    }

    pub fn seq(&self) -> &[usize] {
        &self.seq
    }

    pub fn len(&self) -> usize {
        self.seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seq.is_empty()
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.seq
    }

    /// Collapses runs of consecutive depot slots (including across the wrap)
    /// into one slot. The result has the same closed-tour cost.
    pub fn collapse_depots(&self, inst: &Instance) -> Solution {
        let seq = &self.seq;
        let len = seq.len();
        let mut out = Vec::with_capacity(len);
        for (p, &loc) in seq.iter().enumerate() {
            if inst.is_depot(loc) && p > 0 && inst.is_depot(seq[p - 1]) {
                continue;
            }
            out.push(loc);
        }
        if out.len() > 1 && inst.is_depot(out[0]) && inst.is_depot(out[out.len() - 1]) {
            out.pop();
        }
        Solution { seq: out }
    }
}

impl From<Vec<usize>> for Solution {
    fn from(seq: Vec<usize>) -> Self {
        Solution { seq }
    }
}

/// Closed-tour Euclidean length of a feasible solution.
pub fn tour_length(inst: &Instance, sol: &Solution) -> Result<f64> {
    let report = check_feasible(inst, sol);
    if let Some(v) = report.violation {
        return Err(Error::InfeasibleSolution(v.to_string()));
    }
    Ok(inst.sequence_cost(sol.seq()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Instance {
        Instance::tsp(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]).unwrap()
    }

    #[test]
    fn unit_square_perimeter() {
        let inst = square();
        let len = tour_length(&inst, &Solution::new(vec![0, 1, 2, 3])).unwrap();
        assert_eq!(len, 4.0);
    }

    #[test]
    fn single_customer_out_and_back() {
        let inst = Instance::cvrp(vec![[0.0, 0.0], [3.0, 4.0]], vec![0, 1], 5, 0, 4).unwrap();
        let sol = Solution::new(vec![0, 1, 0, 0]);
        assert_eq!(tour_length(&inst, &sol).unwrap(), 10.0);
        let sol = Solution::new(vec![0, 0, 1, 0]);
        assert_eq!(tour_length(&inst, &sol).unwrap(), 10.0);
    }

    #[test]
    fn six_node_length_matches_direct_summation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let pts: Vec<Point> = (0..6).map(|_| [rng.gen(), rng.gen()]).collect();
        let inst = Instance::tsp(pts.clone()).unwrap();
        let order = [3usize, 0, 5, 1, 4, 2];
        let mut expected = 0.0;
        for k in 0..6 {
            let a = pts[order[k]];
            let b = pts[order[(k + 1) % 6]];
            expected += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        }
        let got = tour_length(&inst, &Solution::new(order.to_vec())).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn infeasible_solution_is_rejected() {
        let inst = square();
        let err = tour_length(&inst, &Solution::new(vec![0, 1, 1, 3])).unwrap_err();
        assert!(err.to_string().starts_with("infeasible-solution"));
    }

    #[test]
    fn rounded_metric_is_integral() {
        let inst = Instance::tsp(vec![[0.0, 0.0], [1.0, 1.0], [2.6, 0.3]])
            .unwrap()
            .with_metric(Metric::RoundedEuclidean);
        // sqrt(2)=1.41 -> 1, dist((1,1),(2.6,.3))=1.746 -> 2, dist(0,(2.6,.3))=2.617 -> 3
        assert_eq!(inst.sequence_cost(&[0, 1, 2]), 6.0);
    }

    #[test]
    fn cvrp_construction_checks_invariants() {
        let c = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(Instance::cvrp(c.clone(), vec![0, 3, 9], 8, 0, 4).is_err());
        assert!(Instance::cvrp(c.clone(), vec![1, 3, 3], 8, 0, 4).is_err());
        assert!(Instance::cvrp(c.clone(), vec![0, 3, 3], 8, 0, 2).is_err());
        assert!(Instance::cvrp(c, vec![0, 3, 3], 8, 0, 4).is_ok());
        assert!(Instance::tsp(vec![[f64::NAN, 0.0]]).is_err());
    }

    #[test]
    fn collapse_depots_keeps_cost() {
        let inst = Instance::cvrp(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
            vec![0, 1, 1, 1],
            2,
            0,
            7,
        )
        .unwrap();
        let sol = Solution::new(vec![0, 0, 1, 2, 0, 0, 3]);
        let collapsed = sol.collapse_depots(&inst);
        assert_eq!(collapsed.seq(), &[0, 1, 2, 0, 3]);
        assert!((inst.sequence_cost(sol.seq()) - inst.sequence_cost(collapsed.seq())).abs() < 1e-12);
    }
}
