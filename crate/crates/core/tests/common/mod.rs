#![allow(dead_code)]

use crlogit::network::{Network, NetworkBuilder, Observation, StateId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// DAG on `n` nodes (edges i<j), every node with a successor, two attributes,
/// integer costs in `cost_range` on `arity` dimensions, and each interior node a
/// reset with probability `reset_p`.
pub fn random_dag(
    rng: &mut ChaCha8Rng,
    n: usize,
    edge_p: f64,
    arity: usize,
    cost_range: (i64, i64),
    reset_p: f64,
) -> Network {
    let dest = n - 1;
    let mut b = NetworkBuilder::new(n, dest).attributes(["a", "b"]).constraints(arity, 1.0);
    for i in 0..dest {
        let mut any = false;
        for j in i + 1..n {
            if rng.gen_bool(edge_p) {
                any = true;
                push_random_edge(rng, &mut b, i, j, arity, cost_range);
            }
        }
        if !any {
            let j = rng.gen_range(i + 1..n);
            push_random_edge(rng, &mut b, i, j, arity, cost_range);
        }
    }
    for s in 1..dest {
        for d in 0..arity {
            if rng.gen_bool(reset_p) {
                b.push_reset(s, d);
            }
        }
    }
    b.build().unwrap()
}

/// Strongly cyclic network: a ring `0 -> 1 -> ... -> n-2 -> 0`, random chords in
/// both directions, and exits from a few nodes to the destination `n-1`. All
/// costs are 1 on one dimension; the single attribute is 1 on every edge.
pub fn random_cyclic_unit(rng: &mut ChaCha8Rng, n: usize, chord_p: f64) -> Network {
    let dest = n - 1;
    let ring = n - 1;
    let mut b = NetworkBuilder::new(n, dest).attributes(["length"]).constraints(1, 1.0);
    for i in 0..ring {
        b.push_edge(i, (i + 1) % ring, vec![1.0], vec![1]);
    }
    for i in 0..ring {
        for j in 0..ring {
            if i != j && j != (i + 1) % ring && rng.gen_bool(chord_p) {
                b.push_edge(i, j, vec![1.0], vec![1]);
            }
        }
    }
    b.push_edge(ring - 1, dest, vec![1.0], vec![1]);
    for i in 0..ring - 1 {
        if rng.gen_bool(0.3) {
            b.push_edge(i, dest, vec![1.0], vec![1]);
        }
    }
    b.build().unwrap()
}

fn push_random_edge(
    rng: &mut ChaCha8Rng,
    b: &mut NetworkBuilder,
    i: usize,
    j: usize,
    arity: usize,
    (lo, hi): (i64, i64),
) {
    let attrs = vec![rng.gen_range(0.1..2.0), rng.gen_range(-1.0..1.0)];
    let costs = (0..arity).map(|_| rng.gen_range(lo..=hi)).collect();
    b.push_edge(i, j, attrs, costs);
}

/// A route found by the brute-force walk: states, edge ids and utility.
#[derive(Debug, Clone)]
pub struct Route {
    pub states: Vec<StateId>,
    pub edges: Vec<usize>,
    pub utility: f64,
    pub feasible: bool,
}

/// Every simple route from `origin` to the destination of a DAG, with utility
/// `beta . x` and stepwise feasibility under `alpha` (cost, then reset).
pub fn brute_force_routes(net: &Network, beta: &[f64], origin: StateId, alpha: &[i64]) -> Vec<Route> {
    fn walk(
        net: &Network,
        beta: &[f64],
        alpha: &[i64],
        states: &mut Vec<StateId>,
        edges: &mut Vec<usize>,
        out: &mut Vec<Route>,
    ) {
        let s = *states.last().unwrap();
        if s == net.destination() {
            let mut acc = vec![0i64; alpha.len()];
            let mut feasible = acc.iter().zip(alpha).all(|(c, a)| c <= a);
            let mut utility = 0.0;
            for &id in edges.iter() {
                let e = net.edge(id);
                utility += e.attributes.iter().zip(beta).map(|(x, b)| x * b).sum::<f64>();
                for d in 0..alpha.len() {
                    acc[d] += e.costs[d];
                    feasible &= acc[d] <= alpha[d];
                    if net.is_reset(e.to, d) {
                        acc[d] = 0;
                    }
                }
            }
            out.push(Route { states: states.clone(), edges: edges.clone(), utility, feasible });
            return;
        }
        for (id, e) in net.edges().iter().enumerate() {
            if e.from == s {
                states.push(e.to);
                edges.push(id);
                walk(net, beta, alpha, states, edges, out);
                states.pop();
                edges.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(net, beta, alpha, &mut vec![origin], &mut Vec::new(), &mut out);
    out
}

/// Logit shares over the feasible routes; infeasible ones get 0.
pub fn mnl(routes: &[Route], mu: f64) -> Vec<f64> {
    let max = routes
        .iter()
        .filter(|r| r.feasible)
        .map(|r| r.utility / mu)
        .fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = routes
        .iter()
        .map(|r| if r.feasible { (r.utility / mu - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| if total > 0.0 { x / total } else { 0.0 }).collect()
}

pub fn obs(states: &[StateId]) -> Observation {
    Observation::new(states.to_vec())
}

/// Central difference of `f` along each coordinate.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[k] += h;
            dn[k] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}
