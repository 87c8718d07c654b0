//! Random geometric DAG generator for the synthetic experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Network, NetworkBuilder, DEFAULT_TIME_QUANTUM, TRAVEL_TIME};
use crate::error::{Error, Result};

pub const DAG_ATTRIBUTES: [&str; 4] = [TRAVEL_TIME, "left_turn", "right_turn", "u_turn"];

/// A generated network together with the node coordinates it was built from.
#[derive(Debug, Clone)]
pub struct GeometricDag {
    pub network: Network,
    pub points: Vec<[f64; 2]>,
}

/// Node positions drawn uniformly in the unit square.
pub fn geometric_points(n_nodes: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_nodes).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect()
}

/// Turn dummies `[left, right, u_turn]` for moving along `heading` when the
/// reference direction is `reference`.
pub(crate) fn turn_dummies(reference: [f64; 2], heading: [f64; 2]) -> [f64; 3] {
    let cross = reference[0] * heading[1] - reference[1] * heading[0];
    let dot = reference[0] * heading[0] + reference[1] * heading[1];
    if cross == 0.0 && dot == 0.0 {
        return [0.0; 3];
    }
    let angle = cross.atan2(dot).to_degrees();
    if angle.abs() >= 170.0 {
        [0.0, 0.0, 1.0]
    } else if angle > 10.0 {
        [1.0, 0.0, 0.0]
    } else if angle < -10.0 {
        [0.0, 1.0, 0.0]
    } else {
        [0.0; 3]
    }
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

/// Random geometric DAG on `n_nodes` points: nodes closer than `2/sqrt(n)` are
/// joined, edges run from lower to higher index, node 0 is the origin and node
/// `n-1` the absorbing destination.
///
/// Attributes per edge are travel time (Euclidean length, hours) and
/// left/right/U-turn dummies measured against the bearing from the tail node
/// toward the destination. The single constraint dimension is travel time
/// rounded to [`DEFAULT_TIME_QUANTUM`].
pub fn generate_geometric_dag(n_nodes: usize, seed: u64) -> Result<GeometricDag> {
    if n_nodes < 2 {
        return Err(Error::Argument(format!(
            "geometric DAG needs at least 2 nodes, got {n_nodes}"
        )));
    }
    let points = geometric_points(n_nodes, seed);
    let radius = 2.0 / (n_nodes as f64).sqrt();
    let dest = n_nodes - 1;

    let mut pairs = Vec::new();
    for i in 0..n_nodes {
        for j in i + 1..n_nodes {
            let d = sub(points[j], points[i]);
            if d[0].hypot(d[1]) < radius {
                pairs.push((i, j));
            }
        }
    }
    // Every node needs a successor and a predecessor so that all of them lie on
    // some origin-destination route; missing ones join the nearest eligible node.
    let dist = |i: usize, j: usize| {
        let d = sub(points[j], points[i]);
        d[0].hypot(d[1])
    };
    let nearest = |i: usize, range: std::ops::Range<usize>| {
        range.min_by(|&a, &b| dist(i, a).total_cmp(&dist(i, b))).expect("non-empty range")
    };
    let mut has_out = vec![false; n_nodes];
    let mut has_in = vec![false; n_nodes];
    for &(i, j) in &pairs {
        has_out[i] = true;
        has_in[j] = true;
    }
    for i in 0..dest {
        if !has_out[i] {
            pairs.push((i, nearest(i, i + 1..n_nodes)));
        }
    }
    for j in 1..n_nodes {
        if !has_in[j] {
            pairs.push((nearest(j, 0..j), j));
        }
    }
    pairs.sort_unstable();
    pairs.dedup();

    let mut b = NetworkBuilder::new(n_nodes, dest)
        .attributes(DAG_ATTRIBUTES)
        .constraints(1, DEFAULT_TIME_QUANTUM);
    for (i, j) in pairs {
        let heading = sub(points[j], points[i]);
        let length = heading[0].hypot(heading[1]);
        let [l, r, u] = turn_dummies(sub(points[dest], points[i]), heading);
        let cost = (length / DEFAULT_TIME_QUANTUM).round() as i64;
        b.push_edge(i, j, vec![length, l, r, u], vec![cost]);
    }
    Ok(GeometricDag {
        network: b.build()?,
        points,
    })
}
