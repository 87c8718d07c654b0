//! Network data model: states, edges with attribute and cost vectors, reset
//! flags, and the designated absorbing destination.

pub mod assets;
mod generate;
mod io;

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};

pub use generate::{generate_geometric_dag, geometric_points, GeometricDag, DAG_ATTRIBUTES};
pub use io::{load_network, load_observations, save_network, save_observations};

/// Index into a network's state table.
pub type StateId = usize;

/// Default cost quantum (hours) for time-based constraints.
pub const DEFAULT_TIME_QUANTUM: f64 = 0.1;

/// Name of the attribute treated as travel time by [`longest_travel_time`].
pub const TRAVEL_TIME: &str = "travel_time";

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: StateId,
    pub to: StateId,
    /// Utility attributes, one per network attribute name.
    pub attributes: Vec<f64>,
    /// Constraint costs in integer quanta, one per constraint dimension.
    pub costs: Vec<i64>,
}

/// An observed route: a state sequence from an origin to the destination.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Observation(pub Vec<StateId>);

impl Observation {
    pub fn new(path: Vec<StateId>) -> Self {
        Observation(path)
    }

    pub fn states(&self) -> &[StateId] {
        &self.0
    }

    pub fn origin(&self) -> Option<StateId> {
        self.0.first().copied()
    }

    pub fn hops(&self) -> usize {
        self.0.len().saturating_sub(1)
    }
}

impl From<Vec<StateId>> for Observation {
    fn from(path: Vec<StateId>) -> Self {
        Observation(path)
    }
}

/// Immutable route-choice network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    num_states: usize,
    destination: StateId,
    attribute_names: Vec<String>,
    constraint_arity: usize,
    cost_quantum: f64,
    edges: Vec<Edge>,
    /// Row-major `num_states x constraint_arity`.
    reset: Vec<bool>,
    out: Vec<Vec<usize>>,
    lookup: HashMap<(StateId, StateId), usize>,
}

/// Incremental construction of a [`Network`]; invariants are checked in [`NetworkBuilder::build`].
#[derive(Debug, Clone)]
pub struct NetworkBuilder {
    num_states: usize,
    destination: StateId,
    attribute_names: Vec<String>,
    constraint_arity: usize,
    cost_quantum: f64,
    edges: Vec<Edge>,
    resets: Vec<(StateId, usize)>,
}

impl NetworkBuilder {
    pub fn new(num_states: usize, destination: StateId) -> Self {
        NetworkBuilder {
            num_states,
            destination,
            attribute_names: Vec::new(),
            constraint_arity: 0,
            cost_quantum: 1.0,
            edges: Vec::new(),
            resets: Vec::new(),
        }
    }

    pub fn attributes<S: Into<String>>(mut self, names: impl IntoIterator<Item = S>) -> Self {
        self.attribute_names = names.into_iter().map(Into::into).collect();
        self
    }

    pub fn constraints(mut self, arity: usize, quantum: f64) -> Self {
        self.constraint_arity = arity;
        self.cost_quantum = quantum;
        self
    }

    pub fn edge(mut self, from: StateId, to: StateId, attributes: Vec<f64>, costs: Vec<i64>) -> Self {
        self.push_edge(from, to, attributes, costs);
        self
    }

    pub fn push_edge(&mut self, from: StateId, to: StateId, attributes: Vec<f64>, costs: Vec<i64>) {
        self.edges.push(Edge {
            from,
            to,
            attributes,
            costs,
        });
    }

    pub fn reset(mut self, state: StateId, dim: usize) -> Self {
        self.resets.push((state, dim));
        self
    }

    pub fn push_reset(&mut self, state: StateId, dim: usize) {
        self.resets.push((state, dim));
    }

    pub fn build(self) -> Result<Network> {
        let n = self.num_states;
        let k = self.constraint_arity;
        if n == 0 {
            return Err(Error::Invalid("network has no states".into()));
        }
        if self.destination >= n {
            return Err(Error::Invalid(format!(
                "destination {} out of range (0..{n})",
                self.destination
            )));
        }
        if !(self.cost_quantum > 0.0 && self.cost_quantum.is_finite()) {
            return Err(Error::Invalid(format!(
                "cost quantum must be positive, got {}",
                self.cost_quantum
            )));
        }
        let arity = self.attribute_names.len();
        let mut out = vec![Vec::new(); n];
        let mut lookup = HashMap::with_capacity(self.edges.len());
        for (id, e) in self.edges.iter().enumerate() {
            if e.from >= n || e.to >= n {
                return Err(Error::Invalid(format!(
                    "edge ({}, {}) references an unknown state",
                    e.from, e.to
                )));
            }
            if e.from == self.destination {
                return Err(Error::Invalid(format!(
                    "destination {} has an outgoing edge to {}",
                    e.from, e.to
                )));
            }
            if e.attributes.len() != arity {
                return Err(Error::Invalid(format!(
                    "edge ({}, {}) has {} attributes, expected {arity}",
                    e.from,
                    e.to,
                    e.attributes.len()
                )));
            }
            if e.attributes.iter().any(|a| !a.is_finite()) {
                return Err(Error::Invalid(format!(
                    "edge ({}, {}) has a non-finite attribute",
                    e.from, e.to
                )));
            }
            if e.costs.len() != k {
                return Err(Error::Invalid(format!(
                    "edge ({}, {}) has {} costs, expected {k}",
                    e.from,
                    e.to,
                    e.costs.len()
                )));
            }
            if lookup.insert((e.from, e.to), id).is_some() {
                return Err(Error::Invalid(format!("duplicate edge ({}, {})", e.from, e.to)));
            }
            out[e.from].push(id);
        }
        let mut reset = vec![false; n * k];
        for (s, d) in self.resets {
            if s >= n || d >= k {
                return Err(Error::Invalid(format!("reset ({s}, {d}) out of range")));
            }
            reset[s * k + d] = true;
        }
        Ok(Network {
            num_states: n,
            destination: self.destination,
            attribute_names: self.attribute_names,
            constraint_arity: k,
            cost_quantum: self.cost_quantum,
            edges: self.edges,
            reset,
            out,
            lookup,
        })
    }
}

impl Network {
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn destination(&self) -> StateId {
        self.destination
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn attribute_arity(&self) -> usize {
        self.attribute_names.len()
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attribute_names.iter().position(|a| a == name)
    }

    pub fn constraint_arity(&self) -> usize {
        self.constraint_arity
    }

    pub fn cost_quantum(&self) -> f64 {
        self.cost_quantum
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> &Edge {
        &self.edges[id]
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edge ids leaving `s`, in insertion order.
    pub fn out_edges(&self, s: StateId) -> &[usize] {
        &self.out[s]
    }

    pub fn edge_between(&self, from: StateId, to: StateId) -> Option<usize> {
        self.lookup.get(&(from, to)).copied()
    }

    pub fn is_reset(&self, s: StateId, dim: usize) -> bool {
        self.reset[s * self.constraint_arity + dim]
    }

    pub fn resets(&self) -> impl Iterator<Item = (StateId, usize)> + '_ {
        let k = self.constraint_arity;
        self.reset
            .iter()
            .enumerate()
            .filter(|(_, &r)| r)
            .map(move |(i, _)| (i / k, i % k))
    }

    pub fn has_negative_cost(&self) -> bool {
        self.edges.iter().any(|e| e.costs.iter().any(|&c| c < 0))
    }

    pub fn has_resets(&self) -> bool {
        self.reset.iter().any(|&r| r)
    }

    /// A builder seeded with this network's contents.
    pub fn to_builder(&self) -> NetworkBuilder {
        NetworkBuilder {
            num_states: self.num_states,
            destination: self.destination,
            attribute_names: self.attribute_names.clone(),
            constraint_arity: self.constraint_arity,
            cost_quantum: self.cost_quantum,
            edges: self.edges.clone(),
            resets: self.resets().collect(),
        }
    }

    /// Copy of this network with the given reset flags replacing the existing ones.
    pub fn with_resets(&self, resets: &[(StateId, usize)]) -> Result<Network> {
        let mut b = self.to_builder();
        b.resets = resets.to_vec();
        b.build()
    }

    /// Kahn topological order over all states, or `None` if a cycle exists.
    pub fn topological_order(&self) -> Option<Vec<StateId>> {
        let mut indeg = vec![0usize; self.num_states];
        for e in &self.edges {
            indeg[e.to] += 1;
        }
        let mut queue: VecDeque<StateId> = (0..self.num_states).filter(|&s| indeg[s] == 0).collect();
        let mut order = Vec::with_capacity(self.num_states);
        while let Some(s) = queue.pop_front() {
            order.push(s);
            for &id in &self.out[s] {
                let t = self.edges[id].to;
                indeg[t] -= 1;
                if indeg[t] == 0 {
                    queue.push_back(t);
                }
            }
        }
        (order.len() == self.num_states).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// Edge ids along `obs`, checking that every hop is an edge and that the walk ends at the destination.
    pub fn path_edges(&self, obs: &Observation) -> Result<Vec<usize>> {
        let states = obs.states();
        if states.is_empty() {
            return Err(Error::Argument("empty observation".into()));
        }
        if let Some(&s) = states.iter().find(|&&s| s >= self.num_states) {
            return Err(Error::Argument(format!("unknown state {s} in observation")));
        }
        let mut ids = Vec::with_capacity(states.len() - 1);
        for w in states.windows(2) {
            let id = self
                .edge_between(w[0], w[1])
                .ok_or(Error::NotAnEdge { from: w[0], to: w[1] })?;
            ids.push(id);
        }
        if *states.last().unwrap() != self.destination {
            return Err(Error::NotTerminated {
                destination: self.destination,
            });
        }
        Ok(ids)
    }

    /// Sum of edge attributes along a path.
    pub fn path_attributes(&self, edge_ids: &[usize]) -> Vec<f64> {
        let mut total = vec![0.0; self.attribute_arity()];
        for &id in edge_ids {
            for (t, a) in total.iter_mut().zip(&self.edges[id].attributes) {
                *t += a;
            }
        }
        total
    }

    /// States from which the destination can be reached.
    pub fn reaches_destination(&self) -> Vec<bool> {
        let mut rev = vec![Vec::new(); self.num_states];
        for e in &self.edges {
            rev[e.to].push(e.from);
        }
        let mut seen = vec![false; self.num_states];
        seen[self.destination] = true;
        let mut stack = vec![self.destination];
        while let Some(s) = stack.pop() {
            for &p in &rev[s] {
                if !seen[p] {
                    seen[p] = true;
                    stack.push(p);
                }
            }
        }
        seen
    }
}

/// Maximum total travel time over all `origin`-to-destination paths, using the
/// `travel_time` attribute.
pub fn longest_travel_time(net: &Network, origin: StateId) -> Result<f64> {
    let tt = net
        .attribute_index(TRAVEL_TIME)
        .ok_or_else(|| Error::Argument(format!("network has no `{TRAVEL_TIME}` attribute")))?;
    let order = net
        .topological_order()
        .ok_or(Error::Cyclic("the longest travel time"))?;
    if origin >= net.num_states() {
        return Err(Error::Argument(format!("origin {origin} out of range")));
    }
    let mut best = vec![f64::NEG_INFINITY; net.num_states()];
    best[origin] = 0.0;
    for s in order {
        if best[s] == f64::NEG_INFINITY {
            continue;
        }
        for &id in net.out_edges(s) {
            let e = net.edge(id);
            let cand = best[s] + e.attributes[tt];
            if cand > best[e.to] {
                best[e.to] = cand;
            }
        }
    }
    let t = best[net.destination()];
    if t == f64::NEG_INFINITY {
        return Err(Error::Argument(format!(
            "destination unreachable from origin {origin}"
        )));
    }
    Ok(t)
}

/// Largest accumulated cost in dimension `dim` over all `origin`-to-destination
/// routes, ignoring resets.
pub fn longest_route_cost(net: &Network, origin: StateId, dim: usize) -> Result<i64> {
    if dim >= net.constraint_arity() {
        return Err(Error::Argument(format!("network has no constraint dimension {dim}")));
    }
    if origin >= net.num_states() {
        return Err(Error::Argument(format!("origin {origin} out of range")));
    }
    let order = net
        .topological_order()
        .ok_or(Error::Cyclic("the longest route cost"))?;
    let mut best: Vec<Option<i64>> = vec![None; net.num_states()];
    best[origin] = Some(0);
    for s in order {
        let Some(b) = best[s] else { continue };
        for &id in net.out_edges(s) {
            let e = net.edge(id);
            let cand = b + e.costs[dim];
            if best[e.to].is_none_or(|c| cand > c) {
                best[e.to] = Some(cand);
            }
        }
    }
    best[net.destination()].ok_or_else(|| Error::Argument(format!("destination unreachable from origin {origin}")))
}

/// Bound in cost quanta equal to `percent` of the longest route, rounded down.
///
/// The longest route is measured in the quantized costs of dimension 0, so a
/// full budget never prunes a route even though each edge cost was rounded.
pub fn threshold_from_percent(net: &Network, origin: StateId, percent: f64) -> Result<i64> {
    if !(percent > 0.0 && percent <= 1.0) {
        return Err(Error::Argument(format!(
            "threshold percent must lie in (0, 1], got {percent}"
        )));
    }
    let c_max = longest_route_cost(net, origin, 0)?;
    Ok((percent * c_max as f64 + 1e-9).floor() as i64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_edge(tt: f64) -> Network {
        NetworkBuilder::new(2, 1)
            .attributes([TRAVEL_TIME])
            .constraints(1, 0.5)
            .edge(0, 1, vec![tt], vec![(tt / 0.5).round() as i64])
            .build()
            .unwrap()
    }

    #[test]
    fn toy_longest_time() {
        let net = assets::toy_travel_time();
        assert!((longest_travel_time(&net, 0).unwrap() - 3.0).abs() < 1e-12);
        assert!((longest_travel_time(&single_edge(1.25), 0).unwrap() - 1.25).abs() < 1e-12);
    }

    #[test]
    fn thresholds() {
        let net = assets::toy_travel_time();
        assert_eq!(threshold_from_percent(&net, 0, 0.9).unwrap(), 5);
        assert_eq!(threshold_from_percent(&net, 0, 1.0).unwrap(), 6);
        assert_eq!(threshold_from_percent(&net, 0, 0.2).unwrap(), 1);
        assert!(threshold_from_percent(&net, 0, 0.0).is_err());
        assert!(threshold_from_percent(&net, 0, -0.5).is_err());
    }

    #[test]
    fn longest_time_rejects_cycles() {
        let net = NetworkBuilder::new(3, 2)
            .attributes([TRAVEL_TIME])
            .edge(0, 1, vec![1.0], vec![])
            .edge(1, 0, vec![1.0], vec![])
            .edge(1, 2, vec![1.0], vec![])
            .build()
            .unwrap();
        assert!(matches!(longest_travel_time(&net, 0), Err(Error::Cyclic(_))));
    }

    #[test]
    fn builder_rejects_bad_edges() {
        let dup = NetworkBuilder::new(2, 1)
            .edge(0, 1, vec![], vec![])
            .edge(0, 1, vec![], vec![])
            .build();
        assert!(dup.is_err());
        let out_of_dest = NetworkBuilder::new(2, 1).edge(1, 0, vec![], vec![]).build();
        assert!(out_of_dest.is_err());
        let dangling = NetworkBuilder::new(2, 1).edge(0, 5, vec![], vec![]).build();
        assert!(dangling.is_err());
    }

    #[test]
    fn path_edges_validates() {
        let net = assets::toy_travel_time();
        assert!(net.path_edges(&Observation(vec![0, 2, 4, 1])).is_ok());
        assert!(matches!(
            net.path_edges(&Observation(vec![0, 4, 1])),
            Err(Error::NotAnEdge { from: 0, to: 4 })
        ));
        assert!(matches!(
            net.path_edges(&Observation(vec![0, 2])),
            Err(Error::NotTerminated { .. })
        ));
    }
}
