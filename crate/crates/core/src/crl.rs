//! Constrained recursive logit through an extended state space.
//!
//! Each extended state pairs a network state with the accumulated cost vector
//! of the route that reached it. Transitions add the edge cost, drop any
//! successor that exceeds the bound in some dimension, then zero the
//! dimensions reset at the node reached. Two histories with the same
//! `(state, accumulated cost)` share a value, which makes the constrained
//! model Markovian again and reduces it to ordinary recursive logit on the
//! extended graph.

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::bellman::{self, DecisionGraph, SolverOptions};
use crate::error::{Error, Result, SolveFailure};
use crate::network::{Network, Observation, StateId};
use crate::rl::UtilitySpec;

/// Default limit on the number of extended states.
pub const DEFAULT_STATE_CAP: usize = 5_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExtendedState {
    pub base: StateId,
    pub acc: Vec<i64>,
}

/// Apply one transition to an accumulated cost vector. Returns `None` when the
/// bound is exceeded in any dimension; resets are applied after the check.
pub fn advance(net: &Network, acc: &[i64], edge_id: usize, alpha: &[i64]) -> Option<Vec<i64>> {
    let e = net.edge(edge_id);
    let mut next: Vec<i64> = acc.iter().zip(&e.costs).map(|(a, c)| a + c).collect();
    if next.iter().zip(alpha).any(|(c, a)| c > a) {
        return None;
    }
    for (d, c) in next.iter_mut().enumerate() {
        if net.is_reset(e.to, d) {
            *c = 0;
        }
    }
    Some(next)
}

/// Reachable feasible `(state, accumulated cost)` pairs from `(origin, 0)`.
#[derive(Debug, Clone)]
pub struct ExtendedStateSpace {
    states: Vec<ExtendedState>,
    index: HashMap<ExtendedState, usize>,
    graph: DecisionGraph,
    origin: StateId,
    alpha: Vec<i64>,
}

impl ExtendedStateSpace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[ExtendedState] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &ExtendedState {
        &self.states[i]
    }

    pub fn index_of(&self, state: &ExtendedState) -> Option<usize> {
        self.index.get(state).copied()
    }

    /// Always 0: the space is grown from `(origin, 0)`.
    pub fn origin_index(&self) -> usize {
        0
    }

    pub fn origin(&self) -> StateId {
        self.origin
    }

    pub fn alpha(&self) -> &[i64] {
        &self.alpha
    }

    pub fn destination_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.graph.is_terminal(i)).collect()
    }

    pub fn is_acyclic(&self) -> bool {
        self.graph.is_acyclic()
    }

    pub fn graph(&self) -> &DecisionGraph {
        &self.graph
    }

    pub fn num_transitions(&self) -> usize {
        self.graph.num_transitions()
    }

    /// `(target extended index, network edge id)` pairs out of extended state `i`.
    pub fn successors(&self, i: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.graph.successors(i)
    }

    /// Extended state indices visited by `obs`, or `None` if some prefix breaks
    /// the bound. Errors if `obs` is not a valid route from this space's origin.
    pub fn lift(&self, net: &Network, obs: &Observation) -> Result<Option<Vec<usize>>> {
        let edge_ids = net.path_edges(obs)?;
        if obs.origin() != Some(self.origin) {
            return Err(Error::Argument(format!(
                "observation starts at {:?}, extended space is rooted at {}",
                obs.origin(),
                self.origin
            )));
        }
        let mut acc = vec![0i64; net.constraint_arity()];
        let mut visited = Vec::with_capacity(edge_ids.len() + 1);
        visited.push(0);
        for id in edge_ids {
            let Some(next) = advance(net, &acc, id, &self.alpha) else {
                return Ok(None);
            };
            acc = next;
            let key = ExtendedState {
                base: net.edge(id).to,
                acc: acc.clone(),
            };
            let i = self
                .index_of(&key)
                .expect("feasible successors are always expanded");
            visited.push(i);
        }
        Ok(Some(visited))
    }

    /// Transition index for moving from extended state `from` to `to`.
    pub fn transition(&self, from: usize, to: usize) -> Option<usize> {
        self.graph.range(from).find(|&tr| self.graph.target(tr) == to)
    }
}

pub fn build_extended(net: &Network, origin: StateId, alpha: &[i64]) -> Result<ExtendedStateSpace> {
    build_extended_with(net, origin, alpha, DEFAULT_STATE_CAP)
}

/// Breadth-first expansion from `(origin, 0)`; fails once more than `state_cap`
/// extended states exist.
pub fn build_extended_with(
    net: &Network,
    origin: StateId,
    alpha: &[i64],
    state_cap: usize,
) -> Result<ExtendedStateSpace> {
    let k = net.constraint_arity();
    if alpha.len() != k {
        return Err(Error::Argument(format!(
            "alpha has {} components, network has {k} constraint dimensions",
            alpha.len()
        )));
    }
    if let Some(a) = alpha.iter().find(|&&a| a < 0) {
        return Err(Error::Argument(format!("bound {a} is negative")));
    }
    if origin >= net.num_states() {
        return Err(Error::Argument(format!("origin {origin} out of range")));
    }
    let root = ExtendedState {
        base: origin,
        acc: vec![0; k],
    };
    let mut states = vec![root.clone()];
    let mut index = HashMap::new();
    index.insert(root, 0usize);
    let mut successors: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let (base, acc) = (states[i].base, states[i].acc.clone());
        let mut row = Vec::new();
        if base != net.destination() {
            for &id in net.out_edges(base) {
                let Some(next_acc) = advance(net, &acc, id, alpha) else {
                    continue;
                };
                let key = ExtendedState {
                    base: net.edge(id).to,
                    acc: next_acc,
                };
                let j = match index.get(&key) {
                    Some(&j) => j,
                    None => {
                        let j = states.len();
                        if j >= state_cap {
                            return Err(Error::StateCap {
                                cap: state_cap,
                                detail: describe_spread(&states, k, alpha),
                            });
                        }
                        states.push(key.clone());
                        index.insert(key, j);
                        queue.push_back(j);
                        j
                    }
                };
                row.push((j, id));
            }
        }
        if successors.len() <= i {
            successors.resize(i + 1, Vec::new());
        }
        successors[i] = row;
    }
    successors.resize(states.len(), Vec::new());
    let terminal = states.iter().map(|s| s.base == net.destination()).collect();
    Ok(ExtendedStateSpace {
        graph: DecisionGraph::new(successors, terminal),
        states,
        index,
        origin,
        alpha: alpha.to_vec(),
    })
}

fn describe_spread(states: &[ExtendedState], k: usize, alpha: &[i64]) -> String {
    let dims: Vec<String> = (0..k)
        .map(|d| {
            let lo = states.iter().map(|s| s.acc[d]).min().unwrap_or(0);
            let hi = states.iter().map(|s| s.acc[d]).max().unwrap_or(0);
            format!("dim {d}: accumulated cost in [{lo}, {hi}], bound {}", alpha[d])
        })
        .collect();
    format!("{} constraint dimension(s); {}", k, dims.join("; "))
}

#[derive(Debug, Clone, PartialEq)]
enum Scale {
    Uniform(f64),
    PerState(Vec<f64>),
}

/// Values on the extended space, held as `ln z = V/mu` with the scale used to
/// solve them.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedValueTable {
    log_z: Vec<f64>,
    scale: Scale,
}

impl ExtendedValueTable {
    fn mu_at(&self, i: usize) -> f64 {
        match &self.scale {
            Scale::Uniform(m) => *m,
            Scale::PerState(m) => m[i],
        }
    }

    pub fn z(&self, i: usize) -> f64 {
        self.log_z[i].exp()
    }

    pub fn log_z(&self) -> &[f64] {
        &self.log_z
    }

    pub fn value(&self, i: usize) -> f64 {
        self.mu_at(i) * self.log_z[i]
    }

    /// Logit choice probability of transition `tr` out of extended state `from`.
    fn prob(&self, xs: &ExtendedStateSpace, edge_utility: &[f64], from: usize, tr: usize) -> f64 {
        let g = xs.graph();
        let to = g.target(tr);
        if self.log_z[from] == f64::NEG_INFINITY || self.log_z[to] == f64::NEG_INFINITY {
            return 0.0;
        }
        let v = edge_utility[g.edge_id(tr)];
        match &self.scale {
            Scale::Uniform(m) => (v / m + self.log_z[to] - self.log_z[from]).exp(),
            Scale::PerState(m) => ((v + m[to] * self.log_z[to]) / m[from] - self.log_z[from]).exp(),
        }
    }
}

pub fn solve_erl(xs: &ExtendedStateSpace, net: &Network, u: &UtilitySpec) -> Result<ExtendedValueTable> {
    solve_erl_with(xs, net, u, &SolverOptions::default())
}

/// Backward induction when the extended graph is acyclic, otherwise the
/// linear system with the same failure rules as the base model.
pub fn solve_erl_with(
    xs: &ExtendedStateSpace,
    net: &Network,
    u: &UtilitySpec,
    opts: &SolverOptions,
) -> Result<ExtendedValueTable> {
    u.check(net)?;
    let log_w = xs.graph.log_weights(&u.edge_utilities(net), u.mu);
    let log_z = bellman::solve_log(&xs.graph, &log_w, opts)?;
    Ok(ExtendedValueTable {
        log_z,
        scale: Scale::Uniform(u.mu),
    })
}

/// Relative residual of `z = M z + B` on the extended space.
pub fn erl_residual(xs: &ExtendedStateSpace, net: &Network, u: &UtilitySpec, evt: &ExtendedValueTable) -> f64 {
    let log_w = xs.graph.log_weights(&u.edge_utilities(net), u.mu);
    bellman::relative_residual(&xs.graph, &log_w, &evt.log_z)
}

/// Choice probability of every extended transition, indexed like
/// [`DecisionGraph::range`]. Pruned continuations simply have no transition.
pub fn erl_link_probs(
    xs: &ExtendedStateSpace,
    net: &Network,
    u: &UtilitySpec,
    evt: &ExtendedValueTable,
) -> Vec<f64> {
    let utility = u.edge_utilities(net);
    let mut probs = vec![0.0; xs.num_transitions()];
    for s in 0..xs.len() {
        for tr in xs.graph.range(s) {
            probs[tr] = evt.prob(xs, &utility, s, tr);
        }
    }
    probs
}

/// Probability of `obs`: the product of extended choice probabilities along its
/// lift, or exactly 0 if any prefix exceeds the bound.
pub fn path_prob_crl(
    xs: &ExtendedStateSpace,
    net: &Network,
    u: &UtilitySpec,
    evt: &ExtendedValueTable,
    obs: &Observation,
) -> Result<f64> {
    let Some(visited) = xs.lift(net, obs)? else {
        return Ok(0.0);
    };
    let utility = u.edge_utilities(net);
    let mut p = 1.0;
    for w in visited.windows(2) {
        let tr = xs.transition(w[0], w[1]).expect("lifted hop is a transition");
        p *= evt.prob(xs, &utility, w[0], tr);
    }
    Ok(p)
}

/// Expected traversals of each base edge on a trip from the space's origin.
pub fn edge_flows_crl(
    xs: &ExtendedStateSpace,
    net: &Network,
    u: &UtilitySpec,
    evt: &ExtendedValueTable,
) -> Result<Vec<f64>, SolveFailure> {
    let probs = erl_link_probs(xs, net, u, evt);
    let mut per_edge = vec![0.0; net.num_edges()];
    if evt.log_z[xs.origin_index()] == f64::NEG_INFINITY {
        return Ok(per_edge);
    }
    let flows = bellman::transition_flows(&xs.graph, &probs, xs.origin_index(), &SolverOptions::default())?;
    for (tr, f) in flows.into_iter().enumerate() {
        per_edge[xs.graph.edge_id(tr)] += f;
    }
    Ok(per_edge)
}

/// State-dependent logit scales for the nested variant, given per base state.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedSpec {
    pub default_mu: f64,
    pub overrides: BTreeMap<StateId, f64>,
}

impl NestedSpec {
    pub fn uniform(mu: f64) -> Self {
        NestedSpec {
            default_mu: mu,
            overrides: BTreeMap::new(),
        }
    }

    pub fn with(mut self, state: StateId, mu: f64) -> Self {
        self.overrides.insert(state, mu);
        self
    }

    pub fn mu_at(&self, base: StateId) -> f64 {
        self.overrides.get(&base).copied().unwrap_or(self.default_mu)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |m: f64| m > 0.0 && m.is_finite();
        if !ok(self.default_mu) || !self.overrides.values().all(|&m| ok(m)) {
            return Err(Error::Argument("nested scales must all be positive".into()));
        }
        Ok(())
    }
}

/// Value recursion with a scale per extended state. The scale in `u` is not used.
pub fn solve_nested(
    xs: &ExtendedStateSpace,
    net: &Network,
    u: &UtilitySpec,
    nested: &NestedSpec,
) -> Result<ExtendedValueTable> {
    solve_nested_with(xs, net, u, nested, &SolverOptions::default())
}

pub fn solve_nested_with(
    xs: &ExtendedStateSpace,
    net: &Network,
    u: &UtilitySpec,
    nested: &NestedSpec,
    opts: &SolverOptions,
) -> Result<ExtendedValueTable> {
    u.check(net)?;
    nested.validate()?;
    let mu: Vec<f64> = xs.states.iter().map(|s| nested.mu_at(s.base)).collect();
    let values = bellman::solve_scaled(&xs.graph, &u.edge_utilities(net), &mu, opts)?;
    let log_z = values.iter().zip(&mu).map(|(v, m)| v / m).collect();
    Ok(ExtendedValueTable {
        log_z,
        scale: Scale::PerState(mu),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{assets, NetworkBuilder};

    fn toy() -> (Network, UtilitySpec) {
        (assets::toy_travel_time(), UtilitySpec::new(vec![-2.0], 1.0).unwrap())
    }

    fn obs(labels: &[usize]) -> Observation {
        Observation(assets::from_labels(labels))
    }

    #[test]
    fn toy_space_is_prefixes_plus_frontier() {
        let (net, _) = toy();
        let xs = build_extended(&net, 0, &[5]).unwrap();
        let mut got: Vec<(usize, i64)> = xs.states().iter().map(|s| (s.base + 1, s.acc[0])).collect();
        got.sort();
        // Prefixes of [1,3,5,2] and [1,3,4,5,2], plus (6, 4) whose only exit
        // would exceed the bound.
        assert_eq!(got, vec![(1, 0), (2, 4), (2, 5), (3, 1), (4, 2), (5, 3), (5, 4), (6, 4)]);
        assert!(xs.is_acyclic());
        assert_eq!(xs.destination_indices().len(), 2);
    }

    #[test]
    fn zero_bound_keeps_only_origin() {
        let (net, _) = toy();
        let xs = build_extended(&net, 0, &[0]).unwrap();
        assert_eq!(xs.len(), 1);
    }

    #[test]
    fn bad_bounds() {
        let (net, _) = toy();
        assert!(build_extended(&net, 0, &[-1]).is_err());
        assert!(build_extended(&net, 0, &[1, 2]).is_err());
    }

    #[test]
    fn reset_applied_on_arrival() {
        let net = assets::toy_recharge();
        let xs = build_extended(&net, 0, &[6]).unwrap();
        let lifted = xs.lift(&net, &obs(&[1, 3, 4, 5, 6, 7, 2])).unwrap().unwrap();
        // After [1,3,4] the charge resets at node 4, so node 5 carries only the 4->5 cost.
        assert_eq!(xs.state(lifted[2]).acc, vec![0]);
        assert_eq!(xs.state(lifted[3]), &ExtendedState { base: 4, acc: vec![1] });
    }

    #[test]
    fn toy_constrained_probs() {
        let (net, u) = toy();
        let xs = build_extended(&net, 0, &[5]).unwrap();
        let evt = solve_erl(&xs, &net, &u).unwrap();
        let expect = (-4f64).exp() + (-5f64).exp();
        assert!((evt.z(0) - expect).abs() < 1e-15);
        let p2 = path_prob_crl(&xs, &net, &u, &evt, &obs(&[1, 3, 5, 2])).unwrap();
        let p3 = path_prob_crl(&xs, &net, &u, &evt, &obs(&[1, 3, 4, 5, 2])).unwrap();
        assert!((p2 - 0.731).abs() < 1e-3);
        assert!((p3 - 0.269).abs() < 1e-3);
        assert_eq!(path_prob_crl(&xs, &net, &u, &evt, &obs(&[1, 2])).unwrap(), 0.0);
        assert_eq!(path_prob_crl(&xs, &net, &u, &evt, &obs(&[1, 3, 4, 6, 2])).unwrap(), 0.0);
    }

    #[test]
    fn pruned_continuation_has_zero_probability() {
        let (net, u) = toy();
        let xs = build_extended(&net, 0, &[5]).unwrap();
        let evt = solve_erl(&xs, &net, &u).unwrap();
        let probs = erl_link_probs(&xs, &net, &u, &evt);
        let at4 = xs.index_of(&ExtendedState { base: 3, acc: vec![2] }).unwrap();
        for tr in xs.graph().range(at4) {
            let to = xs.state(xs.graph().target(tr)).base;
            if to == 5 {
                // node 6: its exit to 2 would exceed 2.5h
                assert_eq!(probs[tr], 0.0);
            } else {
                assert!((probs[tr] - 1.0).abs() < 1e-12);
            }
        }
        for s in 0..xs.len() {
            let row: f64 = xs.graph().range(s).map(|tr| probs[tr]).sum();
            if evt.log_z()[s].is_finite() && !xs.graph().is_terminal(s) {
                assert!((row - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loose_bound_matches_rl() {
        let (net, u) = toy();
        let xs = build_extended(&net, 0, &[100]).unwrap();
        let evt = solve_erl(&xs, &net, &u).unwrap();
        let vt = crate::rl::solve_rl(&net, &u).unwrap();
        assert!((evt.z(0) - vt.z(0)).abs() < 1e-10);
    }

    #[test]
    fn nested_uniform_equals_erl() {
        let (net, u) = toy();
        let xs = build_extended(&net, 0, &[5]).unwrap();
        let a = solve_erl(&xs, &net, &u).unwrap();
        let b = solve_nested(&xs, &net, &u, &NestedSpec::uniform(1.0)).unwrap();
        for i in 0..xs.len() {
            let (x, y) = (a.log_z()[i], b.log_z()[i]);
            assert!(x == y || (x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn nested_probabilities_normalise() {
        let (net, u) = toy();
        let xs = build_extended(&net, 0, &[5]).unwrap();
        let nested = NestedSpec::uniform(1.0).with(2, 0.5);
        let evt = solve_nested(&xs, &net, &u, &nested).unwrap();
        let p2 = path_prob_crl(&xs, &net, &u, &evt, &obs(&[1, 3, 5, 2])).unwrap();
        let p3 = path_prob_crl(&xs, &net, &u, &evt, &obs(&[1, 3, 4, 5, 2])).unwrap();
        assert!((p2 + p3 - 1.0).abs() < 1e-12);
        assert!(p2 > 0.731, "sharper scale at node 3 favours the better branch");
        assert_eq!(path_prob_crl(&xs, &net, &u, &evt, &obs(&[1, 2])).unwrap(), 0.0);
        assert!(NestedSpec::uniform(1.0).with(0, -1.0).validate().is_err());
    }

    #[test]
    fn nested_chain_is_deterministic() {
        let net = NetworkBuilder::new(3, 2)
            .attributes(["x"])
            .constraints(1, 1.0)
            .edge(0, 1, vec![1.0], vec![1])
            .edge(1, 2, vec![2.0], vec![1])
            .build()
            .unwrap();
        let u = UtilitySpec::new(vec![-1.0], 1.0).unwrap();
        let xs = build_extended(&net, 0, &[5]).unwrap();
        for mu in [0.1, 1.0, 7.0] {
            let nested = NestedSpec::uniform(1.0).with(1, mu);
            let evt = solve_nested(&xs, &net, &u, &nested).unwrap();
            let p = path_prob_crl(&xs, &net, &u, &evt, &Observation(vec![0, 1, 2])).unwrap();
            assert!((p - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn state_cap_reports_dimensions() {
        let (net, _) = toy();
        match build_extended_with(&net, 0, &[5], 3) {
            Err(Error::StateCap { cap: 3, detail }) => assert!(detail.contains("dim 0")),
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn positive_costs_make_cyclic_network_solvable() {
        // a <-> b with large positive utilities; unit costs.
        let net = NetworkBuilder::new(3, 2)
            .attributes(["x"])
            .constraints(1, 1.0)
            .edge(0, 1, vec![1.0], vec![1])
            .edge(1, 0, vec![1.0], vec![1])
            .edge(1, 2, vec![1.0], vec![1])
            .build()
            .unwrap();
        let u = UtilitySpec::new(vec![50.0], 1.0).unwrap();
        assert!(crate::rl::solve_rl(&net, &u).is_err());
        let xs = build_extended(&net, 0, &[30]).unwrap();
        assert!(xs.is_acyclic());
        let evt = solve_erl(&xs, &net, &u).unwrap();
        assert!(erl_residual(&xs, &net, &u, &evt) <= 1e-8);
    }
}
