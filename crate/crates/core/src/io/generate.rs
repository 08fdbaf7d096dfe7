use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::routing::{default_cvrp_slots, Instance, ProblemKind};
use crate::stream_rng;

/// Vehicle capacity used for random CVRP instances with `n` customers.
pub fn capacity_for(n: usize) -> u32 {
    match n {
        0..=20 => 30,
        21..=50 => 40,
        _ => 50,
    }
}

/// Recipe for random instances: uniform coordinates in the unit square and,
/// for CVRP, integer demands drawn uniformly from 1..=9.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: ProblemKind,
    /// Number of customers (cities for TSP).
    pub n: usize,
    /// Overrides [`capacity_for`].
    #[serde(default)]
    pub capacity: Option<u32>,
    /// Overrides the default padded length.
    #[serde(default)]
    pub slots: Option<usize>,
}

impl GeneratorSpec {
    pub fn tsp(n: usize) -> Self {
        GeneratorSpec {
            kind: ProblemKind::Tsp,
            n,
            capacity: None,
            slots: None,
        }
    }

    pub fn cvrp(n: usize) -> Self {
        GeneratorSpec {
            kind: ProblemKind::Cvrp,
            ..Self::tsp(n)
        }
    }

    pub fn capacity(&self) -> u32 {
        self.capacity.unwrap_or_else(|| capacity_for(self.n))
    }

    /// Solution length `I`.
    pub fn slots(&self) -> usize {
        match self.kind {
            ProblemKind::Tsp => self.n,
            ProblemKind::Cvrp => self.slots.unwrap_or_else(|| default_cvrp_slots(self.n)),
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let ok = match self.kind {
            ProblemKind::Tsp => self.n >= 3,
            ProblemKind::Cvrp => self.n >= 2 && self.capacity() >= 9 && self.slots() > self.n,
        };
        if ok {
            Ok(())
        } else {
            Err(crate::Error::Config(format!("invalid generator settings {self:?}")))
        }
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Instance {
        let mut point = || [rng.gen::<f64>(), rng.gen::<f64>()];
        match self.kind {
            ProblemKind::Tsp => {
                let coords = (0..self.n).map(|_| point()).collect();
                Instance::tsp(coords).expect("generated TSP is valid")
            }
            ProblemKind::Cvrp => {
                let coords: Vec<_> = (0..=self.n).map(|_| point()).collect();
                let mut demands = vec![0];
                demands.extend((0..self.n).map(|_| rng.gen_range(1..=9u32)));
                Instance::cvrp(coords, demands, self.capacity(), 0, self.slots())
                    .expect("generated CVRP is valid")
            }
        }
    }
}

/// `count` instances; instance `k` is drawn from stream `k` of `seed`, so
/// any prefix of the set is reproducible on its own.
pub fn generate_set(spec: &GeneratorSpec, count: usize, seed: u64) -> Vec<Instance> {
    (0..count)
        .map(|k| spec.generate(&mut stream_rng(seed, k as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinates_and_demands_in_range() {
        let set = generate_set(&GeneratorSpec::cvrp(20), 50, 3);
        for inst in &set {
            assert_eq!(inst.slots(), 40);
            assert_eq!(inst.capacity(), 30);
            assert!(inst.coords().iter().flatten().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(inst.demands()[0], 0);
            assert!(inst.demands()[1..].iter().all(|d| (1..=9).contains(d)));
        }
        assert_eq!(generate_set(&GeneratorSpec::cvrp(20), 50, 3), set);
        assert_eq!(generate_set(&GeneratorSpec::cvrp(20), 10, 3), set[..10]);
    }

    #[test]
    fn capacity_rule() {
        assert_eq!(capacity_for(10), 30);
        assert_eq!(capacity_for(20), 30);
        assert_eq!(capacity_for(50), 40);
        assert_eq!(capacity_for(100), 50);
        assert_eq!(GeneratorSpec::cvrp(50).slots(), 100);
        assert_eq!(GeneratorSpec::cvrp(100).slots(), 125);
    }

    // E|X - Y| for X, Y uniform on the unit square equals
    // int int 4 (1-u)(1-v) sqrt(u^2+v^2) du dv over [0,1]^2.
    fn mean_distance_by_quadrature(cells: usize) -> f64 {
        let h = 1.0 / cells as f64;
        let mut total = 0.0;
        for a in 0..cells {
            let u = (a as f64 + 0.5) * h;
            for b in 0..cells {
                let v = (b as f64 + 0.5) * h;
                total += 4.0 * (1.0 - u) * (1.0 - v) * (u * u + v * v).sqrt();
            }
        }
        total * h * h
    }

    #[test]
    fn mean_pairwise_distance_matches_quadrature() {
        let oracle = mean_distance_by_quadrature(1000);
        assert!((oracle - 0.5214).abs() < 1e-3);
        let mut rng = stream_rng(11, 0);
        let spec = GeneratorSpec::tsp(2);
        let pairs = 100_000;
        let mut sum = 0.0;
        for _ in 0..pairs {
            sum += spec.generate(&mut rng).dist(0, 1);
        }
        assert!((sum / pairs as f64 - oracle).abs() < 0.002);
    }
}
