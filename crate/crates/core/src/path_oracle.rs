//! Brute-force path enumeration and path-based MNL probabilities.
//!
//! This is the reference the recursive models are tested against. It works
//! directly on explicit path lists and shares no code with the value solvers.

use crate::error::{Error, Result};
use crate::network::{Network, Observation, StateId};
use crate::rl::UtilitySpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationLimits {
    /// Enumeration fails once more than this many paths are found.
    pub max_paths: usize,
    /// Maximum number of hops; required on cyclic networks.
    pub hop_limit: Option<usize>,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        EnumerationLimits {
            max_paths: 1_000_000,
            hop_limit: None,
        }
    }
}

/// Explicit set of origin-to-destination paths with their utilities and
/// per-dimension total costs.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub paths: Vec<Observation>,
    pub edge_ids: Vec<Vec<usize>>,
    pub utilities: Vec<f64>,
    pub total_costs: Vec<Vec<i64>>,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn position(&self, path: &[StateId]) -> Option<usize> {
        self.paths.iter().position(|p| p.states() == path)
    }

    fn filter(&self, keep: impl Fn(usize) -> bool) -> PathSet {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        PathSet {
            paths: idx.iter().map(|&i| self.paths[i].clone()).collect(),
            edge_ids: idx.iter().map(|&i| self.edge_ids[i].clone()).collect(),
            utilities: idx.iter().map(|&i| self.utilities[i]).collect(),
            total_costs: idx.iter().map(|&i| self.total_costs[i].clone()).collect(),
        }
    }
}

/// All walks from `origin` to the destination, each with its total utility.
pub fn enumerate_paths(
    net: &Network,
    u: &UtilitySpec,
    origin: StateId,
    limits: EnumerationLimits,
) -> Result<PathSet> {
    u.check(net)?;
    if origin >= net.num_states() {
        return Err(Error::Argument(format!("origin {origin} out of range")));
    }
    if limits.hop_limit.is_none() && !net.is_acyclic() {
        return Err(Error::Argument(
            "network is cyclic; path enumeration needs a hop limit".into(),
        ));
    }
    let hop_limit = limits.hop_limit.unwrap_or(usize::MAX);
    let mut out = PathSet {
        paths: Vec::new(),
        edge_ids: Vec::new(),
        utilities: Vec::new(),
        total_costs: Vec::new(),
    };
    let mut states = vec![origin];
    let mut edges = Vec::new();
    dfs(net, u, hop_limit, limits.max_paths, &mut states, &mut edges, &mut out)?;
    Ok(out)
}

fn dfs(
    net: &Network,
    u: &UtilitySpec,
    hop_limit: usize,
    max_paths: usize,
    states: &mut Vec<StateId>,
    edges: &mut Vec<usize>,
    out: &mut PathSet,
) -> Result<()> {
    let s = *states.last().unwrap();
    if s == net.destination() {
        if out.paths.len() == max_paths {
            return Err(Error::PathOverflow { limit: max_paths });
        }
        let mut costs = vec![0i64; net.constraint_arity()];
        let mut utility = 0.0;
        for &id in edges.iter() {
            let e = net.edge(id);
            utility += e.attributes.iter().zip(&u.beta).map(|(x, b)| x * b).sum::<f64>();
            for (c, ec) in costs.iter_mut().zip(&e.costs) {
                *c += ec;
            }
        }
        out.paths.push(Observation(states.clone()));
        out.edge_ids.push(edges.clone());
        out.utilities.push(utility);
        out.total_costs.push(costs);
        return Ok(());
    }
    if edges.len() >= hop_limit {
        return Ok(());
    }
    for &id in net.out_edges(s) {
        states.push(net.edge(id).to);
        edges.push(id);
        dfs(net, u, hop_limit, max_paths, states, edges, out)?;
        states.pop();
        edges.pop();
    }
    Ok(())
}

/// Paths whose total cost is within `alpha` in every dimension. Only defined
/// for nonnegative costs.
pub fn restrict_total(ps: &PathSet, net: &Network, alpha: &[i64]) -> Result<PathSet> {
    check_alpha(net, alpha)?;
    if net.has_negative_cost() {
        return Err(Error::NegativeCost);
    }
    Ok(ps.filter(|i| ps.total_costs[i].iter().zip(alpha).all(|(c, a)| c <= a)))
}

/// Whether every prefix of the walk stays within `alpha`, applying each edge's
/// cost and then any reset at the node reached.
pub fn stepwise_feasible(net: &Network, edge_ids: &[usize], alpha: &[i64]) -> bool {
    let k = net.constraint_arity();
    let mut acc = vec![0i64; k];
    if acc.iter().zip(alpha).any(|(c, a)| c > a) {
        return false;
    }
    for &id in edge_ids {
        let e = net.edge(id);
        for d in 0..k {
            acc[d] += e.costs[d];
            if acc[d] > alpha[d] {
                return false;
            }
            if net.is_reset(e.to, d) {
                acc[d] = 0;
            }
        }
    }
    true
}

/// Paths whose accumulated cost never exceeds `alpha` at any step.
pub fn restrict_stepwise(ps: &PathSet, net: &Network, alpha: &[i64]) -> Result<PathSet> {
    check_alpha(net, alpha)?;
    Ok(ps.filter(|i| stepwise_feasible(net, &ps.edge_ids[i], alpha)))
}

fn check_alpha(net: &Network, alpha: &[i64]) -> Result<()> {
    if alpha.len() != net.constraint_arity() {
        return Err(Error::Argument(format!(
            "alpha has {} components, network has {} constraint dimensions",
            alpha.len(),
            net.constraint_arity()
        )));
    }
    Ok(())
}

/// Path-based logit over the set: `exp(v/mu) / sum exp(v'/mu)`.
pub fn mnl_over(ps: &PathSet, mu: f64) -> Result<Vec<f64>> {
    if ps.is_empty() {
        return Err(Error::EmptyChoiceSet);
    }
    let max = ps
        .utilities
        .iter()
        .map(|v| v / mu)
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = ps.utilities.iter().map(|v| (v / mu - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}
