use crate::error::{Error, Result};
use crate::routing::{Instance, ProblemKind, Solution};

pub const EXACT_MAX_NODES: usize = 13;

/// Held-Karp dynamic program. Returns the optimal closed-tour cost and a
/// tour starting at node 0.
pub fn exact_tsp(inst: &Instance) -> Result<(f64, Solution)> {
    if inst.kind() != ProblemKind::Tsp {
        return Err(Error::UnsupportedProblemType("exact solver handles TSP only".into()));
    }
    let n = inst.num_locations();
    if n > EXACT_MAX_NODES {
        return Err(Error::TooLarge {
            n,
            max: EXACT_MAX_NODES,
        });
    }
    if n <= 3 {
        let seq: Vec<usize> = (0..n).collect();
        return Ok((inst.sequence_cost(&seq), Solution::new(seq)));
    }
    // subsets of nodes 1..n as bitmasks over n-1 bits; cost[mask][last]
    let m = n - 1;
    let full = (1usize << m) - 1;
    let mut cost = vec![f64::INFINITY; (1 << m) * m];
    let mut parent = vec![usize::MAX; (1 << m) * m];
    for k in 0..m {
        cost[(1 << k) * m + k] = inst.dist(0, k + 1);
    }
    for mask in 1..=full {
        for last in 0..m {
            if mask & (1 << last) == 0 {
                continue;
            }
            let c = cost[mask * m + last];
            if !c.is_finite() {
                continue;
            }
            for next in 0..m {
                if mask & (1 << next) != 0 {
                    continue;
                }
                let nm = mask | (1 << next);
                let cand = c + inst.dist(last + 1, next + 1);
                if cand < cost[nm * m + next] {
                    cost[nm * m + next] = cand;
                    parent[nm * m + next] = last;
                }
            }
        }
    }
    let (mut last, best) = (0..m)
        .map(|k| (k, cost[full * m + k] + inst.dist(k + 1, 0)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("n > 3");
    let mut tour = Vec::with_capacity(n);
    let mut mask = full;
    while last != usize::MAX {
        tour.push(last + 1);
        let prev = parent[mask * m + last];
        mask &= !(1 << last);
        last = prev;
    }
    tour.push(0);
    tour.reverse();
    Ok((best, Solution::new(tour)))
}
