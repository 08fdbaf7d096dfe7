use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::routing::{Instance, Point};

/// All permutations of `0..n` (Heap's algorithm).
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn heap(k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(cur.clone());
            return;
        }
        for idx in 0..k {
            heap(k - 1, cur, out);
            if k % 2 == 0 {
                cur.swap(idx, k - 1);
            } else {
                cur.swap(0, k - 1);
            }
        }
    }
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    heap(n, &mut cur, &mut out);
    out
}

pub fn random_tsp(n: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<Point> = (0..n).map(|_| [rng.gen(), rng.gen()]).collect();
    Instance::tsp(pts).unwrap()
}

/// Random CVRP with depot 0, demands 1..=9.
pub fn random_cvrp(n: usize, capacity: u32, slots: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<Point> = (0..=n).map(|_| [rng.gen(), rng.gen()]).collect();
    let mut demands = vec![0];
    demands.extend((0..n).map(|_| rng.gen_range(1..=9)));
    Instance::cvrp(pts, demands, capacity, 0, slots).unwrap()
}
