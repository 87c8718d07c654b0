//! Maximum likelihood estimation of the utility coefficients.
//!
//! The value functions are re-solved at every trial `beta` (nested fixed
//! point). Observations are lifted once, so the log-likelihood of each route
//! reduces to `beta . x(route)/mu - ln z(origin)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::bellman::{self, DecisionGraph, SolverOptions};
use crate::crl::{build_extended_with, NestedSpec, DEFAULT_STATE_CAP};
use crate::error::{Error, Result, SolveFailure};
use crate::network::{Network, Observation, StateId};
use crate::rl::base_graph;

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Rl,
    Crl { alpha: Vec<i64> },
    /// Constrained model with state-dependent scales; only `beta` is estimated.
    Cnrl { alpha: Vec<i64>, nested: NestedSpec },
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::Rl => "RL",
            Model::Crl { .. } => "CRL",
            Model::Cnrl { .. } => "CNRL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationConfig {
    pub mu: f64,
    /// Starting point; zeros when `None`.
    pub beta0: Option<Vec<f64>>,
    pub gradient: GradientMode,
    /// Stop once the largest component of the average log-likelihood gradient is below this.
    pub tol_grad: f64,
    pub max_outer_iters: usize,
    pub solver: SolverOptions,
    pub state_cap: usize,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            mu: 1.0,
            beta0: None,
            gradient: GradientMode::Analytic,
            tol_grad: 1e-6,
            max_outer_iters: 200,
            solver: SolverOptions::default(),
            state_cap: DEFAULT_STATE_CAP,
        }
    }
}

struct LiftedObs {
    index: usize,
    origin: usize,
    hops: Vec<(usize, usize)>,
    features: Vec<f64>,
}

struct Block {
    graph: DecisionGraph,
    /// Per-state scale for the nested model, empty otherwise.
    mu: Vec<f64>,
    obs: Vec<LiftedObs>,
}

/// Observations lifted onto the decision graphs of one model.
pub struct LikelihoodProblem<'a> {
    net: &'a Network,
    model: Model,
    mu: f64,
    blocks: Vec<Block>,
    features: Vec<Vec<f64>>,
    n_obs: usize,
    solver: SolverOptions,
}

impl<'a> LikelihoodProblem<'a> {
    pub fn new(net: &'a Network, model: Model, mu: f64, observations: &[Observation]) -> Result<Self> {
        Self::with_options(net, model, mu, observations, SolverOptions::default(), DEFAULT_STATE_CAP)
    }

    pub fn with_options(
        net: &'a Network,
        model: Model,
        mu: f64,
        observations: &[Observation],
        solver: SolverOptions,
        state_cap: usize,
    ) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Argument(format!("scale mu must be positive, got {mu}")));
        }
        let arity = net.attribute_arity();
        let features: Vec<Vec<f64>> = net.edges().iter().map(|e| e.attributes.clone()).collect();
        let mut edge_paths = Vec::with_capacity(observations.len());
        for obs in observations {
            edge_paths.push(net.path_edges(obs)?);
        }
        let sum_features = |ids: &[usize]| {
            let mut f = vec![0.0; arity];
            for &id in ids {
                for (a, x) in f.iter_mut().zip(&features[id]) {
                    *a += x;
                }
            }
            f
        };
        let hop_in = |g: &DecisionGraph, from: usize, to: usize, edge: usize| {
            g.range(from)
                .find(|&tr| g.target(tr) == to && g.edge_id(tr) == edge)
                .expect("observed hop exists in the decision graph")
        };

        let mut blocks = Vec::new();
        match &model {
            Model::Rl => {
                let graph = base_graph(net);
                let obs = observations
                    .iter()
                    .zip(&edge_paths)
                    .enumerate()
                    .map(|(index, (o, ids))| LiftedObs {
                        index,
                        origin: o.states()[0],
                        hops: o
                            .states()
                            .windows(2)
                            .zip(ids)
                            .map(|(w, &id)| (w[0], hop_in(&graph, w[0], w[1], id)))
                            .collect(),
                        features: sum_features(ids),
                    })
                    .collect();
                blocks.push(Block {
                    graph,
                    mu: Vec::new(),
                    obs,
                });
            }
            Model::Crl { alpha } | Model::Cnrl { alpha, .. } => {
                let nested = match &model {
                    Model::Cnrl { nested, .. } => {
                        nested.validate()?;
                        Some(nested)
                    }
                    _ => None,
                };
                let mut by_origin: BTreeMap<StateId, Vec<usize>> = BTreeMap::new();
                for (i, o) in observations.iter().enumerate() {
                    by_origin.entry(o.states()[0]).or_default().push(i);
                }
                let mut infeasible = Vec::new();
                for (origin, members) in by_origin {
                    let xs = build_extended_with(net, origin, alpha, state_cap)?;
                    let graph = xs.graph().clone();
                    let mut obs = Vec::with_capacity(members.len());
                    for i in members {
                        match xs.lift(net, &observations[i])? {
                            None => infeasible.push(i),
                            Some(visited) => obs.push(LiftedObs {
                                index: i,
                                origin: xs.origin_index(),
                                hops: visited
                                    .windows(2)
                                    .zip(&edge_paths[i])
                                    .map(|(w, &id)| (w[0], hop_in(&graph, w[0], w[1], id)))
                                    .collect(),
                                features: sum_features(&edge_paths[i]),
                            }),
                        }
                    }
                    let mu = match nested {
                        Some(n) => xs.states().iter().map(|s| n.mu_at(s.base)).collect(),
                        None => Vec::new(),
                    };
                    blocks.push(Block { graph, mu, obs });
                }
                if !infeasible.is_empty() {
                    infeasible.sort_unstable();
                    return Err(Error::InfeasibleObservations { indices: infeasible });
                }
            }
        }
        Ok(LikelihoodProblem {
            net,
            model,
            mu,
            blocks,
            features,
            n_obs: observations.len(),
            solver,
        })
    }

    pub fn num_observations(&self) -> usize {
        self.n_obs
    }

    pub fn arity(&self) -> usize {
        self.net.attribute_arity()
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    fn edge_utilities(&self, beta: &[f64]) -> Vec<f64> {
        self.features
            .iter()
            .map(|x| x.iter().zip(beta).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn check_beta(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.arity() {
            return Err(Error::Argument(format!(
                "beta has {} coefficients, network has {} attributes",
                beta.len(),
                self.arity()
            )));
        }
        Ok(())
    }

    /// Log-likelihood of each observation, in input order.
    pub fn loglik_per_obs(&self, beta: &[f64]) -> Result<Vec<f64>> {
        self.check_beta(beta)?;
        let utility = self.edge_utilities(beta);
        let mut out = vec![0.0; self.n_obs];
        for block in &self.blocks {
            let g = &block.graph;
            if block.mu.is_empty() {
                let log_w = g.log_weights(&utility, self.mu);
                let log_z = bellman::solve_log(g, &log_w, &self.solver)?;
                for o in &block.obs {
                    let v: f64 = o.features.iter().zip(beta).map(|(x, b)| x * b).sum();
                    out[o.index] = v / self.mu - log_z[o.origin];
                }
            } else {
                let values = bellman::solve_scaled(g, &utility, &block.mu, &self.solver)?;
                for o in &block.obs {
                    out[o.index] = o
                        .hops
                        .iter()
                        .map(|&(s, tr)| {
                            let m = block.mu[s];
                            (utility[g.edge_id(tr)] + values[g.target(tr)] - values[s]) / m
                        })
                        .sum();
                }
            }
        }
        Ok(out)
    }

    pub fn loglik(&self, beta: &[f64]) -> Result<f64> {
        Ok(self.loglik_per_obs(beta)?.iter().sum())
    }

    /// Gradient of the total log-likelihood.
    pub fn gradient(&self, beta: &[f64], mode: GradientMode) -> Result<Vec<f64>> {
        let nested = self.blocks.iter().any(|b| !b.mu.is_empty());
        match mode {
            GradientMode::Analytic if !nested => self.analytic_gradient(beta),
            _ => self.fd_gradient(beta),
        }
    }

    fn analytic_gradient(&self, beta: &[f64]) -> Result<Vec<f64>> {
        self.check_beta(beta)?;
        let arity = self.arity();
        let utility = self.edge_utilities(beta);
        let mut grad = vec![0.0; arity];
        for block in &self.blocks {
            let g = &block.graph;
            let log_w = g.log_weights(&utility, self.mu);
            let log_z = bellman::solve_log(g, &log_w, &self.solver)?;
            let dlz = bellman::log_value_gradient(g, &log_w, &log_z, &self.features, self.mu, arity, &self.solver)?;
            for o in &block.obs {
                for j in 0..arity {
                    grad[j] += o.features[j] / self.mu - dlz[o.origin * arity + j];
                }
            }
        }
        Ok(grad)
    }

    fn fd_gradient(&self, beta: &[f64]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; beta.len()];
        let mut b = beta.to_vec();
        for j in 0..beta.len() {
            let h = 1e-5 * beta[j].abs().max(1.0);
            b[j] = beta[j] + h;
            let up = self.loglik(&b)?;
            b[j] = beta[j] - h;
            let down = self.loglik(&b)?;
            b[j] = beta[j];
            grad[j] = (up - down) / (2.0 * h);
        }
        Ok(grad)
    }
}

/// Total and per-observation log-likelihood at `beta`.
pub fn loglik(
    net: &Network,
    model: &Model,
    mu: f64,
    beta: &[f64],
    observations: &[Observation],
) -> Result<(f64, Vec<f64>)> {
    let problem = LikelihoodProblem::new(net, model.clone(), mu, observations)?;
    let per = problem.loglik_per_obs(beta)?;
    Ok((per.iter().sum(), per))
}

pub fn loglik_gradient(
    net: &Network,
    model: &Model,
    mu: f64,
    beta: &[f64],
    observations: &[Observation],
    mode: GradientMode,
) -> Result<Vec<f64>> {
    LikelihoodProblem::new(net, model.clone(), mu, observations)?.gradient(beta, mode)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub model: String,
    pub attribute_names: Vec<String>,
    pub beta: Vec<f64>,
    pub std_err: Vec<f64>,
    pub t_stat: Vec<f64>,
    pub avg_loglik: f64,
    pub total_loglik: f64,
    pub n_obs: usize,
    pub converged: bool,
    pub outer_iters: usize,
    pub grad_norm: f64,
    /// Why the optimizer stopped without converging, if it did.
    pub failure: Option<String>,
}

impl EstimationResult {
    /// Fixed-width coefficient table.
    pub fn coefficient_table(&self) -> String {
        let width = self.attribute_names.iter().map(|n| n.len()).max().unwrap_or(0).max(9);
        let mut s = String::new();
        let _ = writeln!(s, "model {}  n = {}", self.model, self.n_obs);
        let _ = writeln!(s, "{:<width$} {:>12} {:>12} {:>10}", "parameter", "estimate", "std.err", "t");
        for (i, name) in self.attribute_names.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:<width$} {:>12.4} {:>12.4} {:>10.2}",
                name, self.beta[i], self.std_err[i], self.t_stat[i]
            );
        }
        let _ = writeln!(s, "average log-likelihood {:.4}", self.avg_loglik);
        let _ = writeln!(s, "total log-likelihood {:.4}", self.total_loglik);
        let _ = writeln!(s, "converged {} after {} iterations", self.converged, self.outer_iters);
        if let Some(f) = &self.failure {
            let _ = writeln!(s, "stopped: {f}");
        }
        s
    }

    /// `key = value` lines, one coefficient per line.
    pub fn key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "model = {}", self.model);
        let _ = writeln!(s, "n_obs = {}", self.n_obs);
        for (i, name) in self.attribute_names.iter().enumerate() {
            let _ = writeln!(s, "beta.{name} = {}", self.beta[i]);
            let _ = writeln!(s, "std_err.{name} = {}", self.std_err[i]);
            let _ = writeln!(s, "t_stat.{name} = {}", self.t_stat[i]);
        }
        let _ = writeln!(s, "avg_loglik = {}", self.avg_loglik);
        let _ = writeln!(s, "total_loglik = {}", self.total_loglik);
        let _ = writeln!(s, "converged = {}", self.converged);
        let _ = writeln!(s, "outer_iters = {}", self.outer_iters);
        let _ = writeln!(s, "grad_norm = {}", self.grad_norm);
        s
    }
}

/// Fit `beta` by BFGS on the average negative log-likelihood.
pub fn estimate(
    net: &Network,
    observations: &[Observation],
    model: &Model,
    cfg: &EstimationConfig,
) -> Result<EstimationResult> {
    let problem =
        LikelihoodProblem::with_options(net, model.clone(), cfg.mu, observations, cfg.solver, cfg.state_cap)?;
    estimate_problem(&problem, cfg)
}

pub fn estimate_problem(problem: &LikelihoodProblem<'_>, cfg: &EstimationConfig) -> Result<EstimationResult> {
    let k = problem.arity();
    if problem.num_observations() == 0 {
        return Err(Error::Argument("no observations to estimate from".into()));
    }
    let beta0 = cfg.beta0.clone().unwrap_or_else(|| vec![0.0; k]);
    if beta0.len() != k {
        return Err(Error::Argument(format!(
            "starting point has {} coefficients, network has {k} attributes",
            beta0.len()
        )));
    }
    let n = problem.num_observations() as f64;
    // Objective and gradient are for the average negative log-likelihood.
    let objective = |b: &[f64]| -> Result<(f64, Vec<f64>)> {
        let ll = problem.loglik(b)?;
        let g = problem.gradient(b, cfg.gradient)?;
        Ok((-ll / n, g.iter().map(|v| -v / n).collect()))
    };
    let outcome = bfgs(objective, beta0, cfg.tol_grad, cfg.max_outer_iters)?;

    let beta = outcome.x;
    let total = problem.loglik(&beta)?;
    let std_err = standard_errors(problem, &beta, cfg.gradient).unwrap_or_else(|_| vec![f64::NAN; k]);
    let t_stat = beta.iter().zip(&std_err).map(|(b, s)| b / s).collect();
    Ok(EstimationResult {
        model: problem.model().name().to_string(),
        attribute_names: problem.net.attribute_names().to_vec(),
        beta,
        std_err,
        t_stat,
        avg_loglik: total / n,
        total_loglik: total,
        n_obs: problem.num_observations(),
        converged: outcome.converged,
        outer_iters: outcome.iterations,
        grad_norm: outcome.grad_norm,
        failure: outcome.failure,
    })
}

struct BfgsOutcome {
    x: Vec<f64>,
    converged: bool,
    iterations: usize,
    grad_norm: f64,
    failure: Option<String>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Quasi-Newton minimization with an Armijo backtracking line search. A solver
/// failure at a trial point is treated as an infinite objective; a failure at
/// the starting point is returned as an error.
fn bfgs<F>(f: F, x0: Vec<f64>, tol_grad: f64, max_iters: usize) -> Result<BfgsOutcome>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let k = x0.len();
    let identity = || DMatrix::<f64>::identity(k, k);
    let mut x = x0;
    let (mut fx, mut gx) = f(&x)?;
    let mut h = identity();
    let mut h_is_identity = true;
    for iter in 0..max_iters {
        let gnorm = inf_norm(&gx);
        if gnorm < tol_grad {
            return Ok(BfgsOutcome {
                x,
                converged: true,
                iterations: iter,
                grad_norm: gnorm,
                failure: None,
            });
        }
        let mut dir: Vec<f64> = (0..k).map(|i| -(0..k).map(|j| h[(i, j)] * gx[j]).sum::<f64>()).collect();
        let mut slope = dot(&dir, &gx);
        if slope >= 0.0 {
            h = identity();
            h_is_identity = true;
            dir = gx.iter().map(|g| -g).collect();
            slope = dot(&dir, &gx);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            match f(&trial) {
                Ok((ft, gt)) if ft.is_finite() && ft <= fx + 1e-4 * step * slope => {
                    accepted = Some((trial, ft, gt));
                    break;
                }
                Ok(_) | Err(Error::Solve(_)) => step *= 0.5,
                Err(e) => return Err(e),
            }
        }
        let Some((xn, fnew, gnew)) = accepted else {
            if h_is_identity {
                return Ok(BfgsOutcome {
                    x,
                    converged: false,
                    iterations: iter,
                    grad_norm: gnorm,
                    failure: Some("line search failed along the steepest-descent direction".into()),
                });
            }
            h = identity();
            h_is_identity = true;
            continue;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&gx).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if h_is_identity {
                h *= sy / dot(&y, &y);
            }
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..k).map(|i| (0..k).map(|j| h[(i, j)] * y[j]).sum()).collect();
            let yhy = dot(&y, &hy);
            for i in 0..k {
                for j in 0..k {
                    h[(i, j)] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
            h_is_identity = false;
        }
        x = xn;
        fx = fnew;
        gx = gnew;
    }
    let gnorm = inf_norm(&gx);
    let converged = gnorm < tol_grad;
    Ok(BfgsOutcome {
        x,
        converged,
        iterations: max_iters,
        grad_norm: gnorm,
        failure: (!converged).then(|| format!("iteration limit {max_iters} reached")),
    })
}

/// Square roots of the diagonal of `(-H)^-1`, with `H` the Hessian of the
/// total log-likelihood from central differences of the gradient.
pub fn standard_errors(problem: &LikelihoodProblem<'_>, beta: &[f64], mode: GradientMode) -> Result<Vec<f64>> {
    let k = beta.len();
    let mut hess = DMatrix::<f64>::zeros(k, k);
    let mut b = beta.to_vec();
    for j in 0..k {
        let h = 1e-4 * beta[j].abs().max(1.0);
        b[j] = beta[j] + h;
        let up = problem.gradient(&b, mode)?;
        b[j] = beta[j] - h;
        let down = problem.gradient(&b, mode)?;
        b[j] = beta[j];
        for i in 0..k {
            hess[(i, j)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    let neg = -(&hess + hess.transpose()) * 0.5;
    // Coefficients with no curvature (attribute absent from every route) are
    // unidentified; invert over the rest.
    let scale = (0..k).fold(0.0f64, |m, i| m.max(neg[(i, i)].abs()));
    let keep: Vec<usize> = (0..k).filter(|&i| neg[(i, i)].abs() > 1e-10 * scale.max(1e-300)).collect();
    let sub = DMatrix::from_fn(keep.len(), keep.len(), |a, b| neg[(keep[a], keep[b])]);
    let cov = sub.try_inverse().ok_or(Error::Solve(SolveFailure::Singular))?;
    let mut se = vec![f64::NAN; k];
    for (a, &i) in keep.iter().enumerate() {
        let v = cov[(a, a)];
        if v > 0.0 {
            se[i] = v.sqrt();
        }
    }
    Ok(se)
}

/// `100 (ll_crl - ll_rl) / |ll_rl|`.
pub fn percent_improve(ll_crl: f64, ll_rl: f64) -> Result<f64> {
    if ll_rl == 0.0 || !ll_rl.is_finite() || !ll_crl.is_finite() {
        return Err(Error::Argument(format!(
            "relative improvement undefined for reference log-likelihood {ll_rl}"
        )));
    }
    Ok(100.0 * (ll_crl - ll_rl) / ll_rl.abs())
}
