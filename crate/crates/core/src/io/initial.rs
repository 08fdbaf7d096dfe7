use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::routing::{Instance, ProblemKind, Solution};

/// Uniform random permutation for TSP; for CVRP a random customer order
/// split greedily into capacity-feasible routes and padded with depots.
pub fn initial_random<R: Rng + ?Sized>(inst: &Instance, rng: &mut R) -> Result<Solution> {
    match inst.depot() {
        None => {
            let mut seq: Vec<usize> = (0..inst.num_locations()).collect();
            seq.shuffle(rng);
            Ok(Solution::new(seq))
        }
        Some(depot) => {
            let mut customers: Vec<usize> = (0..inst.num_locations()).filter(|&v| v != depot).collect();
            customers.shuffle(rng);
            let mut routes: Vec<Vec<usize>> = Vec::new();
            let mut load = u32::MAX;
            for v in customers {
                let d = inst.demand(v);
                if routes.is_empty() || load + d > inst.capacity() {
                    routes.push(Vec::new());
                    load = 0;
                }
                load += d;
                routes.last_mut().expect("route opened").push(v);
            }
            pad_routes(inst, &routes)
        }
    }
}

/// Lays routes out as `depot, r1..., depot, r2..., depot, ...` and fills the
/// remaining slots with depots.
pub(crate) fn pad_routes(inst: &Instance, routes: &[Vec<usize>]) -> Result<Solution> {
    let depot = inst.depot().expect("CVRP instance");
    let mut seq = Vec::with_capacity(inst.slots());
    for r in routes {
        seq.push(depot);
        seq.extend_from_slice(r);
    }
    if seq.len() > inst.slots() {
        return Err(Error::InvalidInstance(format!(
            "{} routes do not fit into {} slots",
            routes.len(),
            inst.slots()
        )));
    }
    seq.resize(inst.slots(), depot);
    Ok(Solution::new(seq))
}

/// Nearest insertion: starting from a seed node (index 0 for TSP, the
/// customer nearest the depot for CVRP), repeatedly takes the unvisited node
/// closest to the partial tour and inserts it where the tour grows least.
/// CVRP insertions that would overload a route are skipped, and a new route
/// is opened when no route can take the node.
pub fn initial_nearest_insertion(inst: &Instance) -> Result<Solution> {
    let n = inst.num_locations();
    let mut in_tour = vec![false; n];
    let mut near = vec![f64::INFINITY; n];
    let visit = |v: usize, in_tour: &mut Vec<bool>, near: &mut Vec<f64>| {
        in_tour[v] = true;
        for u in 0..n {
            near[u] = near[u].min(inst.dist(u, v));
        }
    };
    let closest = |in_tour: &[bool], near: &[f64]| -> Option<usize> {
        (0..n)
            .filter(|&u| !in_tour[u])
            .min_by(|&a, &b| near[a].total_cmp(&near[b]).then(a.cmp(&b)))
    };
    let insertion_cost = |a: usize, v: usize, b: usize| inst.dist(a, v) + inst.dist(v, b) - inst.dist(a, b);

    match (inst.kind(), inst.depot()) {
        (ProblemKind::Tsp, _) | (_, None) => {
            let mut tour = vec![0];
            visit(0, &mut in_tour, &mut near);
            while let Some(v) = closest(&in_tour, &near) {
                let len = tour.len();
                let pos = (0..len)
                    .min_by(|&p, &q| {
                        let cp = insertion_cost(tour[p], v, tour[(p + 1) % len]);
                        let cq = insertion_cost(tour[q], v, tour[(q + 1) % len]);
                        cp.total_cmp(&cq).then(p.cmp(&q))
                    })
                    .expect("non-empty tour");
                tour.insert(pos + 1, v);
                visit(v, &mut in_tour, &mut near);
            }
            Ok(Solution::new(tour))
        }
        (ProblemKind::Cvrp, Some(depot)) => {
            visit(depot, &mut in_tour, &mut near);
            let seed = (0..n)
                .filter(|&u| u != depot)
                .min_by(|&a, &b| inst.dist(depot, a).total_cmp(&inst.dist(depot, b)).then(a.cmp(&b)))
                .expect("at least one customer");
            let mut routes = vec![vec![seed]];
            let mut loads = vec![inst.demand(seed)];
            visit(seed, &mut in_tour, &mut near);
            while let Some(v) = closest(&in_tour, &near) {
                let d = inst.demand(v);
                let mut best: Option<(f64, usize, usize)> = None;
                for (r, route) in routes.iter().enumerate() {
                    if loads[r] + d > inst.capacity() {
                        continue;
                    }
                    for p in 0..=route.len() {
                        let a = if p == 0 { depot } else { route[p - 1] };
                        let b = if p == route.len() { depot } else { route[p] };
                        let c = insertion_cost(a, v, b);
                        if best.is_none_or(|(bc, _, _)| c < bc) {
                            best = Some((c, r, p));
                        }
                    }
                }
                match best {
                    Some((_, r, p)) => {
                        routes[r].insert(p, v);
                        loads[r] += d;
                    }
                    None => {
                        routes.push(vec![v]);
                        loads.push(d);
                    }
                }
                visit(v, &mut in_tour, &mut near);
            }
            pad_routes(inst, &routes)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{generate_set, GeneratorSpec};
    use crate::routing::{check_feasible, tour_length};
    use crate::stream_rng;

    #[test]
    fn random_solutions_are_feasible_and_distinct() {
        let inst = &generate_set(&GeneratorSpec::cvrp(20), 1, 0)[0];
        let mut seen = std::collections::HashSet::new();
        for s in 0..100 {
            let sol = initial_random(inst, &mut stream_rng(s, 0)).unwrap();
            assert_eq!(sol.len(), 40);
            assert!(check_feasible(inst, &sol).is_feasible());
            seen.insert(sol);
        }
        assert_eq!(seen.len(), 100);
        let tsp = &generate_set(&GeneratorSpec::tsp(20), 1, 0)[0];
        let seqs: std::collections::HashSet<_> =
            (0..100).map(|s| initial_random(tsp, &mut stream_rng(s, 1)).unwrap()).collect();
        assert_eq!(seqs.len(), 100);
    }

    #[test]
    fn random_tour_mean_matches_expected_edge_length() {
        let spec = GeneratorSpec::tsp(20);
        let set = generate_set(&spec, 10_000, 5);
        let mut rng = stream_rng(5, 99);
        let mean: f64 = set
            .iter()
            .map(|inst| tour_length(inst, &initial_random(inst, &mut rng).unwrap()).unwrap())
            .sum::<f64>()
            / set.len() as f64;
        let expected = 20.0 * 0.521405;
        assert!((mean - expected).abs() / expected < 0.02, "{mean}");
    }

    #[test]
    fn nearest_insertion_is_feasible_and_beats_random() {
        for seed in 0..20 {
            let inst = &generate_set(&GeneratorSpec::cvrp(20), 1, seed)[0];
            let sol = initial_nearest_insertion(inst).unwrap();
            assert_eq!(sol.len(), inst.slots());
            assert!(check_feasible(inst, &sol).is_feasible());
        }
        for n in 4..=8 {
            let inst = &generate_set(&GeneratorSpec::tsp(n), 1, n as u64)[0];
            let ni = tour_length(inst, &initial_nearest_insertion(inst).unwrap()).unwrap();
            let random_mean = (0..100)
                .map(|s| tour_length(inst, &initial_random(inst, &mut stream_rng(s, 0)).unwrap()).unwrap())
                .sum::<f64>()
                / 100.0;
            assert!(ni <= random_mean, "n={n}: {ni} vs {random_mean}");
        }
    }

    #[test]
    fn cvrp20_nearest_insertion_calibration() {
        let set = generate_set(&GeneratorSpec::cvrp(20), 500, 17);
        let mean = set
            .iter()
            .map(|inst| tour_length(inst, &initial_nearest_insertion(inst).unwrap()).unwrap())
            .sum::<f64>()
            / set.len() as f64;
        assert!((mean - 7.74).abs() / 7.74 <= 0.10, "{mean}");
    }
}
