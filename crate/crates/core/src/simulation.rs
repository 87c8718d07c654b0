//! Synthetic route observations drawn from the fitted models.
//!
//! Observation `i` uses its own ChaCha stream keyed by `(seed, i)`, so any
//! prefix of a sample is reproducible independently of the sample size and
//! generation can run in parallel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::crl::{build_extended, erl_link_probs, solve_erl, solve_nested, ExtendedStateSpace, NestedSpec};
use crate::error::{Error, Result};
use crate::network::{Network, Observation, StateId};
use crate::path_oracle::stepwise_feasible;
use crate::rl::{link_probs, solve_rl, UtilitySpec};

/// Draws per observation after which rejection sampling gives up.
pub const REJECTION_WINDOW: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub enum SimModel {
    Rl,
    Crl,
    Cnrl(NestedSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub model: SimModel,
    pub n_obs: usize,
    pub seed: u64,
    /// Draw from RL and discard routes that break the bound at some step.
    pub rejection: bool,
    pub max_hops: usize,
    pub origin: StateId,
}

impl SimConfig {
    pub fn new(model: SimModel, n_obs: usize, seed: u64, origin: StateId) -> Self {
        SimConfig {
            model,
            n_obs,
            seed,
            rejection: false,
            max_hops: 10_000,
            origin,
        }
    }
}

/// Row-wise successor distributions over some decision graph.
struct Sampler {
    /// `rows[s]` holds `(next state, network edge, cumulative probability)`.
    rows: Vec<Vec<(usize, usize, f64)>>,
    start: usize,
    terminal: Vec<bool>,
    base: Vec<StateId>,
}

impl Sampler {
    fn build(
        n: usize,
        start: usize,
        terminal: Vec<bool>,
        base: Vec<StateId>,
        transitions: impl Fn(usize) -> Vec<(usize, usize, f64)>,
    ) -> Self {
        let rows = (0..n)
            .map(|s| {
                let mut acc = 0.0;
                transitions(s)
                    .into_iter()
                    .filter(|t| t.2 > 0.0)
                    .map(|(to, e, p)| {
                        acc += p;
                        (to, e, acc)
                    })
                    .collect()
            })
            .collect();
        Sampler {
            rows,
            start,
            terminal,
            base,
        }
    }

    fn walk(&self, rng: &mut ChaCha8Rng, max_hops: usize) -> Result<(Vec<StateId>, Vec<usize>)> {
        let mut s = self.start;
        let mut states = vec![self.base[s]];
        let mut edges = Vec::new();
        while !self.terminal[s] {
            if edges.len() == max_hops {
                return Err(Error::HopCap { max_hops });
            }
            let row = &self.rows[s];
            let total = row.last().map_or(0.0, |r| r.2);
            let u = rng.gen::<f64>() * total;
            let &(to, e, _) = row.iter().find(|r| u < r.2).unwrap_or(&row[row.len() - 1]);
            s = to;
            states.push(self.base[s]);
            edges.push(e);
        }
        Ok((states, edges))
    }
}

fn check_origin(net: &Network, origin: StateId, z: f64) -> Result<()> {
    if origin >= net.num_states() {
        return Err(Error::Argument(format!("origin {origin} out of range")));
    }
    if !(z > 0.0) {
        return Err(Error::EmptyChoiceSet);
    }
    Ok(())
}

/// Draw `cfg.n_obs` routes from `cfg.origin`. `alpha` is required by the
/// constrained models and by rejection mode.
pub fn simulate(net: &Network, u: &UtilitySpec, alpha: Option<&[i64]>, cfg: &SimConfig) -> Result<Vec<Observation>> {
    if cfg.n_obs == 0 || cfg.max_hops == 0 {
        return Err(Error::Argument("n_obs and max_hops must be positive".into()));
    }
    let need_alpha = || alpha.ok_or_else(|| Error::Argument("a bound is required for this model".into()));
    let sampler = match &cfg.model {
        SimModel::Rl => {
            let vt = solve_rl(net, u)?;
            check_origin(net, cfg.origin, vt.z(cfg.origin))?;
            let probs = link_probs(net, u, &vt);
            Sampler::build(
                net.num_states(),
                cfg.origin,
                (0..net.num_states()).map(|s| s == net.destination()).collect(),
                (0..net.num_states()).collect(),
                |s| net.out_edges(s).iter().map(|&e| (net.edge(e).to, e, probs[e])).collect(),
            )
        }
        SimModel::Crl | SimModel::Cnrl(_) => {
            let xs = build_extended(net, cfg.origin, need_alpha()?)?;
            let evt = match &cfg.model {
                SimModel::Cnrl(nested) => solve_nested(&xs, net, u, nested)?,
                _ => solve_erl(&xs, net, u)?,
            };
            check_origin(net, cfg.origin, evt.z(xs.origin_index()))?;
            let probs = erl_link_probs(&xs, net, u, &evt);
            extended_sampler(&xs, &probs)
        }
    };
    let bound = if cfg.rejection {
        if cfg.model != SimModel::Rl {
            return Err(Error::Argument("rejection mode draws from RL".into()));
        }
        Some(need_alpha()?)
    } else {
        None
    };

    (0..cfg.n_obs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            for _ in 0..REJECTION_WINDOW {
                let (states, edges) = sampler.walk(&mut rng, cfg.max_hops)?;
                match bound {
                    Some(a) if !stepwise_feasible(net, &edges, a) => continue,
                    _ => return Ok(Observation(states)),
                }
            }
            Err(Error::RejectionRate {
                rate: 1.0 / REJECTION_WINDOW as f64,
            })
        })
        .collect()
}

fn extended_sampler(xs: &ExtendedStateSpace, probs: &[f64]) -> Sampler {
    let g = xs.graph();
    Sampler::build(
        xs.len(),
        xs.origin_index(),
        (0..xs.len()).map(|s| g.is_terminal(s)).collect(),
        xs.states().iter().map(|s| s.base).collect(),
        |s| g.range(s).map(|tr| (g.target(tr), g.edge_id(tr), probs[tr])).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{assets, NetworkBuilder};

    fn frequencies(obs: &[Observation], routes: &[&[usize]]) -> Vec<f64> {
        routes
            .iter()
            .map(|r| {
                let path = assets::from_labels(r);
                obs.iter().filter(|o| o.states() == path.as_slice()).count() as f64 / obs.len() as f64
            })
            .collect()
    }

    #[test]
    fn crl_frequencies() {
        let net = assets::toy_travel_time();
        let u = UtilitySpec::new(vec![-2.0], 1.0).unwrap();
        let cfg = SimConfig::new(SimModel::Crl, 20_000, 7, 0);
        let obs = simulate(&net, &u, Some(&[5]), &cfg).unwrap();
        let f = frequencies(&obs, &[&[1, 3, 5, 2], &[1, 3, 4, 5, 2]]);
        assert!((f[0] - 0.731).abs() < 0.015 && (f[1] - 0.269).abs() < 0.015, "{f:?}");
        assert!((f[0] + f[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_and_prefix_stable() {
        let net = assets::toy_travel_time();
        let u = UtilitySpec::new(vec![-2.0], 1.0).unwrap();
        let a = simulate(&net, &u, None, &SimConfig::new(SimModel::Rl, 500, 3, 0)).unwrap();
        let b = simulate(&net, &u, None, &SimConfig::new(SimModel::Rl, 500, 3, 0)).unwrap();
        let c = simulate(&net, &u, None, &SimConfig::new(SimModel::Rl, 200, 3, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(&a[..200], &c[..]);
        let d = simulate(&net, &u, None, &SimConfig::new(SimModel::Rl, 500, 4, 0)).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn rejection_matches_constrained_support() {
        let net = assets::toy_recharge();
        let u = UtilitySpec::new(vec![-2.0], 1.0).unwrap();
        let mut cfg = SimConfig::new(SimModel::Rl, 300, 11, 0);
        cfg.rejection = true;
        let obs = simulate(&net, &u, Some(&[6]), &cfg).unwrap();
        let only = assets::from_labels(&[1, 3, 4, 5, 6, 7, 2]);
        assert!(obs.iter().all(|o| o.states() == only.as_slice()));
    }

    #[test]
    fn rejection_too_tight() {
        let net = assets::toy_travel_time();
        let u = UtilitySpec::new(vec![-2.0], 1.0).unwrap();
        let mut cfg = SimConfig::new(SimModel::Rl, 3, 1, 0);
        cfg.rejection = true;
        assert!(matches!(
            simulate(&net, &u, Some(&[1]), &cfg),
            Err(Error::RejectionRate { .. })
        ));
    }

    #[test]
    fn single_path() {
        let net = NetworkBuilder::new(3, 2)
            .attributes(["x"])
            .constraints(1, 1.0)
            .edge(0, 1, vec![1.0], vec![1])
            .edge(1, 2, vec![1.0], vec![1])
            .build()
            .unwrap();
        let u = UtilitySpec::new(vec![-1.0], 1.0).unwrap();
        for model in [SimModel::Rl, SimModel::Crl] {
            let obs = simulate(&net, &u, Some(&[2]), &SimConfig::new(model, 50, 0, 0)).unwrap();
            assert!(obs.iter().all(|o| o.states() == [0, 1, 2]));
        }
    }

    #[test]
    fn hop_cap() {
        let net = NetworkBuilder::new(3, 2)
            .attributes(["x"])
            .edge(0, 1, vec![-0.01], vec![])
            .edge(1, 0, vec![-0.01], vec![])
            .edge(1, 2, vec![-20.0], vec![])
            .build()
            .unwrap();
        let u = UtilitySpec::new(vec![1.0], 1.0).unwrap();
        let mut cfg = SimConfig::new(SimModel::Rl, 5, 0, 0);
        cfg.max_hops = 3;
        assert!(matches!(simulate(&net, &u, None, &cfg), Err(Error::HopCap { max_hops: 3 })));
    }

    #[test]
    fn infeasible_origin() {
        let net = assets::toy_travel_time();
        let u = UtilitySpec::new(vec![-2.0], 1.0).unwrap();
        let cfg = SimConfig::new(SimModel::Crl, 5, 0, 0);
        assert!(matches!(simulate(&net, &u, Some(&[3]), &cfg), Err(Error::EmptyChoiceSet)));
    }
}
