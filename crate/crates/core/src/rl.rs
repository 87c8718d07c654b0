//! Unconstrained recursive logit on the base network.

use crate::bellman::{self, DecisionGraph, SolverOptions};
use crate::error::{Error, Result, SolveFailure};
use crate::network::{Network, Observation, StateId};

/// Linear-in-parameters utility `v(s'|s) = beta . x(s,s')` with logit scale `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilitySpec {
    pub beta: Vec<f64>,
    pub mu: f64,
}

impl UtilitySpec {
    pub fn new(beta: Vec<f64>, mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Argument(format!("scale mu must be positive, got {mu}")));
        }
        Ok(UtilitySpec { beta, mu })
    }

    pub fn check(&self, net: &Network) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::Argument(format!(
                "scale mu must be positive, got {}",
                self.mu
            )));
        }
        if self.beta.len() != net.attribute_arity() {
            return Err(Error::Argument(format!(
                "beta has {} coefficients, network has {} attributes",
                self.beta.len(),
                net.attribute_arity()
            )));
        }
        Ok(())
    }

    /// Deterministic utility of every network edge.
    pub fn edge_utilities(&self, net: &Network) -> Vec<f64> {
        net.edges()
            .iter()
            .map(|e| e.attributes.iter().zip(&self.beta).map(|(x, b)| x * b).sum())
            .collect()
    }

    pub fn path_utility(&self, net: &Network, edge_ids: &[usize]) -> f64 {
        edge_ids
            .iter()
            .map(|&id| {
                net.edge(id)
                    .attributes
                    .iter()
                    .zip(&self.beta)
                    .map(|(x, b)| x * b)
                    .sum::<f64>()
            })
            .sum()
    }
}

/// `z(s) = exp(V(s)/mu)` for every state, held as `ln z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    log_z: Vec<f64>,
    mu: f64,
}

impl ValueTable {
    pub(crate) fn from_log(log_z: Vec<f64>, mu: f64) -> Self {
        ValueTable { log_z, mu }
    }

    pub fn z(&self, s: usize) -> f64 {
        self.log_z[s].exp()
    }

    /// Expected maximum utility `V(s)`; `-inf` when the destination is unreachable.
    pub fn value(&self, s: usize) -> f64 {
        self.mu * self.log_z[s]
    }

    pub fn log_z(&self) -> &[f64] {
        &self.log_z
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn len(&self) -> usize {
        self.log_z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_z.is_empty()
    }
}

/// Base network as a decision graph with the destination as the only terminal.
pub fn base_graph(net: &Network) -> DecisionGraph {
    let successors = (0..net.num_states())
        .map(|s| {
            net.out_edges(s)
                .iter()
                .map(|&id| (net.edge(id).to, id))
                .collect()
        })
        .collect();
    let terminal = (0..net.num_states()).map(|s| s == net.destination()).collect();
    DecisionGraph::new(successors, terminal)
}

pub fn solve_rl(net: &Network, u: &UtilitySpec) -> Result<ValueTable> {
    solve_rl_with(net, u, &SolverOptions::default())
}

/// Solve `z = M z + b`. Fails with [`SolveFailure`] when no positive solution
/// exists, which happens on cyclic networks whose utilities are too large.
pub fn solve_rl_with(net: &Network, u: &UtilitySpec, opts: &SolverOptions) -> Result<ValueTable> {
    u.check(net)?;
    let g = base_graph(net);
    let log_w = g.log_weights(&u.edge_utilities(net), u.mu);
    let log_z = bellman::solve_log(&g, &log_w, opts)?;
    Ok(ValueTable::from_log(log_z, u.mu))
}

/// `max |z - M z - b| / max(1, |z|)` for a solved table.
pub fn rl_residual(net: &Network, u: &UtilitySpec, vt: &ValueTable) -> f64 {
    let g = base_graph(net);
    let log_w = g.log_weights(&u.edge_utilities(net), u.mu);
    bellman::relative_residual(&g, &log_w, vt.log_z())
}

/// Link choice probability `P(to|from)` for every edge, indexed by edge id.
pub fn link_probs(net: &Network, u: &UtilitySpec, vt: &ValueTable) -> Vec<f64> {
    net.edges()
        .iter()
        .zip(u.edge_utilities(net))
        .map(|(e, v)| {
            let (from, to) = (vt.log_z[e.from], vt.log_z[e.to]);
            if from == f64::NEG_INFINITY || to == f64::NEG_INFINITY {
                0.0
            } else {
                (v / u.mu + to - from).exp()
            }
        })
        .collect()
}

/// Product of link probabilities along `obs`.
pub fn path_prob_rl(net: &Network, u: &UtilitySpec, vt: &ValueTable, obs: &Observation) -> Result<f64> {
    let ids = net.path_edges(obs)?;
    let probs = link_probs(net, u, vt);
    Ok(ids.iter().map(|&id| probs[id]).product())
}

/// Closed form `exp((v(sigma) - V(s0))/mu)`.
pub fn path_prob_rl_closed(net: &Network, u: &UtilitySpec, vt: &ValueTable, obs: &Observation) -> Result<f64> {
    let ids = net.path_edges(obs)?;
    let origin = obs.origin().expect("validated path is nonempty");
    Ok(((u.path_utility(net, &ids) - vt.value(origin)) / u.mu).exp())
}

/// Expected traversals of each edge for a trip from `origin`.
pub fn edge_flows_rl(net: &Network, u: &UtilitySpec, vt: &ValueTable, origin: StateId) -> Result<Vec<f64>, SolveFailure> {
    let g = base_graph(net);
    let probs = link_probs(net, u, vt);
    let tr_prob: Vec<f64> = (0..g.num_transitions()).map(|tr| probs[g.edge_id(tr)]).collect();
    let flows = bellman::transition_flows(&g, &tr_prob, origin, &SolverOptions::default())?;
    let mut per_edge = vec![0.0; net.num_edges()];
    for (tr, f) in flows.into_iter().enumerate() {
        per_edge[g.edge_id(tr)] += f;
    }
    Ok(per_edge)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::assets;
    use crate::network::NetworkBuilder;

    fn toy() -> (Network, UtilitySpec) {
        (assets::toy_travel_time(), UtilitySpec::new(vec![-2.0], 1.0).unwrap())
    }

    #[test]
    fn toy_origin_value() {
        let (net, u) = toy();
        let vt = solve_rl(&net, &u).unwrap();
        let expect = (-6f64).exp() + (-4f64).exp() + (-5f64).exp() + (-6f64).exp();
        assert!((vt.z(0) - expect).abs() < 1e-14);
        assert!((vt.z(0) - 0.02998).abs() < 5e-5);
        assert_eq!(vt.z(1), 1.0);
        assert_eq!(vt.value(1), 0.0);
    }

    #[test]
    fn toy_link_probs() {
        let (net, u) = toy();
        let vt = solve_rl(&net, &u).unwrap();
        let p = link_probs(&net, &u, &vt);
        let p12 = p[net.edge_between(0, 1).unwrap()];
        let p13 = p[net.edge_between(0, 2).unwrap()];
        assert!((p12 - 0.083).abs() < 1e-3);
        assert!((p13 - 0.917).abs() < 1e-3);
        // Single successor at node 5.
        assert!((p[net.edge_between(4, 1).unwrap()] - 1.0).abs() < 1e-14);
        // Node 3: downstream path masses e^-3 (via 5) vs e^-4 + e^-5 (via 4), after the 0.5h edge.
        let via5 = (-2f64 * 1.5).exp();
        let via4 = (-2f64 * 2.0).exp() + (-2f64 * 2.5).exp();
        let p35 = p[net.edge_between(2, 4).unwrap()];
        assert!((p35 - via5 / (via5 + via4)).abs() < 1e-12);
    }

    #[test]
    fn toy_path_probs() {
        let (net, u) = toy();
        let vt = solve_rl(&net, &u).unwrap();
        let paths = [
            (vec![1, 2], 0.083),
            (vec![1, 3, 5, 2], 0.610),
            (vec![1, 3, 4, 5, 2], 0.224),
            (vec![1, 3, 4, 6, 2], 0.083),
        ];
        let mut total = 0.0;
        for (labels, expect) in paths {
            let obs = Observation(assets::from_labels(&labels));
            let p = path_prob_rl(&net, &u, &vt, &obs).unwrap();
            let closed = path_prob_rl_closed(&net, &u, &vt, &obs).unwrap();
            assert!((p - expect).abs() < 1e-3, "{labels:?}: {p}");
            assert!((p - closed).abs() < 1e-10);
            total += p;
        }
        assert!((total - 1.0).abs() < 1e-9);
        let bad = Observation(vec![0, 3, 1]);
        assert!(path_prob_rl(&net, &u, &vt, &bad).is_err());
    }

    #[test]
    fn single_path_network() {
        let net = NetworkBuilder::new(3, 2)
            .attributes(["tt"])
            .edge(0, 1, vec![1.0], vec![])
            .edge(1, 2, vec![2.0], vec![])
            .build()
            .unwrap();
        let u = UtilitySpec::new(vec![-1.0], 1.0).unwrap();
        let vt = solve_rl(&net, &u).unwrap();
        let p = path_prob_rl(&net, &u, &vt, &Observation(vec![0, 1, 2])).unwrap();
        assert!((p - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_utility_cycle_fails() {
        // a <-> b with v = 0 both ways, b -> d.
        let net = NetworkBuilder::new(3, 2)
            .attributes(["x"])
            .edge(0, 1, vec![0.0], vec![])
            .edge(1, 0, vec![0.0], vec![])
            .edge(1, 2, vec![0.0], vec![])
            .build()
            .unwrap();
        let u = UtilitySpec::new(vec![1.0], 1.0).unwrap();
        assert!(matches!(solve_rl(&net, &u), Err(Error::Solve(_))));
        let iterative = SolverOptions {
            direct_cutoff: 0,
            ..Default::default()
        };
        assert!(matches!(solve_rl_with(&net, &u, &iterative), Err(Error::Solve(_))));
    }

    #[test]
    fn cyclic_success_has_small_residual() {
        let net = NetworkBuilder::new(3, 2)
            .attributes(["x"])
            .edge(0, 1, vec![1.0], vec![])
            .edge(1, 0, vec![1.0], vec![])
            .edge(1, 2, vec![1.0], vec![])
            .edge(0, 2, vec![3.0], vec![])
            .build()
            .unwrap();
        let u = UtilitySpec::new(vec![-1.0], 1.0).unwrap();
        let vt = solve_rl(&net, &u).unwrap();
        assert!(rl_residual(&net, &u, &vt) <= 1e-8);
        let p = link_probs(&net, &u, &vt);
        let out0: f64 = net.out_edges(0).iter().map(|&e| p[e]).sum();
        assert!((out0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn utility_spec_validation() {
        assert!(UtilitySpec::new(vec![1.0], 0.0).is_err());
        let (net, _) = toy();
        let u = UtilitySpec::new(vec![1.0, 2.0], 1.0).unwrap();
        assert!(solve_rl(&net, &u).is_err());
    }
}
