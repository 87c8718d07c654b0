//! Logit Bellman solver shared by the base-network and extended-space models.
//!
//! Values are carried as `ln z(s) = V(s)/mu`, with `-inf` for states that
//! cannot reach a terminal. Acyclic graphs are solved exactly by backward
//! induction in reverse topological order. Cyclic graphs go through the linear
//! system `z = M z + b`, by dense LU below [`SolverOptions::direct_cutoff`]
//! and by value iteration above it.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::SolveFailure;

/// Tuning for the cyclic solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Largest number of unknowns solved by dense LU; above it value iteration runs.
    pub direct_cutoff: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Relative residual accepted after a direct solve.
    pub residual_tolerance: f64,
    /// Any component above this aborts value iteration.
    pub divergence_bound: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            direct_cutoff: 2_000,
            tolerance: 1e-10,
            max_iterations: 10_000,
            residual_tolerance: 1e-8,
            divergence_bound: 1e30,
        }
    }
}

/// Successor structure in compressed rows. Each transition remembers the
/// network edge it uses.
#[derive(Debug, Clone)]
pub struct DecisionGraph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    edge_ids: Vec<usize>,
    terminal: Vec<bool>,
    topo: Option<Vec<usize>>,
}

impl DecisionGraph {
    /// `successors[s]` lists `(target, edge_id)` pairs.
    pub fn new(successors: Vec<Vec<(usize, usize)>>, terminal: Vec<bool>) -> Self {
        debug_assert_eq!(successors.len(), terminal.len());
        let n = successors.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        let mut edge_ids = Vec::new();
        offsets.push(0);
        for row in successors {
            for (t, e) in row {
                targets.push(t);
                edge_ids.push(e);
            }
            offsets.push(targets.len());
        }
        let mut g = DecisionGraph {
            offsets,
            targets,
            edge_ids,
            terminal,
            topo: None,
        };
        g.topo = g.compute_topological_order();
        g
    }

    pub fn len(&self) -> usize {
        self.terminal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terminal.is_empty()
    }

    pub fn num_transitions(&self) -> usize {
        self.targets.len()
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn is_acyclic(&self) -> bool {
        self.topo.is_some()
    }

    pub fn topological_order(&self) -> Option<&[usize]> {
        self.topo.as_deref()
    }

    /// Transition index range of state `s`.
    pub fn range(&self, s: usize) -> std::ops::Range<usize> {
        self.offsets[s]..self.offsets[s + 1]
    }

    pub fn target(&self, tr: usize) -> usize {
        self.targets[tr]
    }

    pub fn edge_id(&self, tr: usize) -> usize {
        self.edge_ids[tr]
    }

    pub fn successors(&self, s: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.range(s).map(move |tr| (self.targets[tr], self.edge_ids[tr]))
    }

    fn compute_topological_order(&self) -> Option<Vec<usize>> {
        let n = self.len();
        let mut indeg = vec![0usize; n];
        for &t in &self.targets {
            indeg[t] += 1;
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&s| indeg[s] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(s) = queue.pop_front() {
            order.push(s);
            for tr in self.range(s) {
                let t = self.targets[tr];
                indeg[t] -= 1;
                if indeg[t] == 0 {
                    queue.push_back(t);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// States with a path to some terminal.
    pub fn alive(&self) -> Vec<bool> {
        let n = self.len();
        let mut rev_off = vec![0usize; n + 1];
        for &t in &self.targets {
            rev_off[t + 1] += 1;
        }
        for i in 0..n {
            rev_off[i + 1] += rev_off[i];
        }
        let mut fill = rev_off.clone();
        let mut rev = vec![0usize; self.targets.len()];
        for s in 0..n {
            for tr in self.range(s) {
                let t = self.targets[tr];
                rev[fill[t]] = s;
                fill[t] += 1;
            }
        }
        let mut seen = self.terminal.clone();
        let mut stack: Vec<usize> = (0..n).filter(|&s| self.terminal[s]).collect();
        while let Some(s) = stack.pop() {
            for &p in &rev[rev_off[s]..rev_off[s + 1]] {
                if !seen[p] {
                    seen[p] = true;
                    stack.push(p);
                }
            }
        }
        seen
    }

    /// Per-transition log weights `v/mu` from per-edge utilities.
    pub fn log_weights(&self, edge_utility: &[f64], mu: f64) -> Vec<f64> {
        self.edge_ids.iter().map(|&e| edge_utility[e] / mu).collect()
    }
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Solve for `ln z` given per-transition log weights.
pub fn solve_log(
    g: &DecisionGraph,
    log_w: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<f64>, SolveFailure> {
    match g.topological_order() {
        Some(order) => Ok(backward_induction(g, log_w, order)),
        None => solve_cyclic(g, log_w, opts),
    }
}

fn backward_induction(g: &DecisionGraph, log_w: &[f64], order: &[usize]) -> Vec<f64> {
    let mut log_z = vec![f64::NEG_INFINITY; g.len()];
    for &s in order.iter().rev() {
        log_z[s] = if g.terminal[s] {
            0.0
        } else {
            log_sum_exp(g.range(s).map(|tr| log_w[tr] + log_z[g.targets[tr]]))
        };
    }
    log_z
}

/// Index map from alive non-terminal states to unknowns.
fn unknowns(g: &DecisionGraph, alive: &[bool]) -> (Vec<usize>, Vec<usize>) {
    let mut index = vec![usize::MAX; g.len()];
    let mut states = Vec::new();
    for s in 0..g.len() {
        if alive[s] && !g.terminal[s] {
            index[s] = states.len();
            states.push(s);
        }
    }
    (index, states)
}

fn solve_cyclic(
    g: &DecisionGraph,
    log_w: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<f64>, SolveFailure> {
    let alive = g.alive();
    let (index, states) = unknowns(g, &alive);
    let m = states.len();

    // M restricted to unknowns, b collects the weight into terminals.
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(m);
    let mut b = vec![0.0; m];
    for (i, &s) in states.iter().enumerate() {
        let mut row = Vec::new();
        for tr in g.range(s) {
            let t = g.targets[tr];
            let w = log_w[tr].exp();
            if !w.is_finite() {
                return Err(SolveFailure::InvalidValue { state: s, value: w });
            }
            if g.terminal[t] {
                b[i] += w;
            } else if alive[t] {
                row.push((index[t], w));
            }
        }
        rows.push(row);
    }

    let z = if m <= opts.direct_cutoff {
        let mut a = DMatrix::<f64>::identity(m, m);
        for (i, row) in rows.iter().enumerate() {
            for &(j, w) in row {
                a[(i, j)] -= w;
            }
        }
        let sol = a
            .lu()
            .solve(&DVector::from_column_slice(&b))
            .ok_or(SolveFailure::Singular)?;
        let z: Vec<f64> = sol.iter().copied().collect();
        for (i, &v) in z.iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                return Err(SolveFailure::InvalidValue {
                    state: states[i],
                    value: v,
                });
            }
        }
        let norm = z.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
        let mut resid = 0.0f64;
        for (i, row) in rows.iter().enumerate() {
            let mz: f64 = row.iter().map(|&(j, w)| w * z[j]).sum();
            resid = resid.max((z[i] - mz - b[i]).abs());
        }
        if resid > opts.residual_tolerance * norm {
            return Err(SolveFailure::Residual {
                residual: resid / norm,
            });
        }
        z
    } else {
        let mut z = vec![0.0; m];
        let mut next = vec![0.0; m];
        let mut converged = false;
        for it in 0..opts.max_iterations {
            let mut delta = 0.0f64;
            let mut norm = 1.0f64;
            for (i, row) in rows.iter().enumerate() {
                let v: f64 = b[i] + row.iter().map(|&(j, w)| w * z[j]).sum::<f64>();
                delta = delta.max((v - z[i]).abs());
                norm = norm.max(v.abs());
                next[i] = v;
            }
            std::mem::swap(&mut z, &mut next);
            if !norm.is_finite() || norm > opts.divergence_bound {
                return Err(SolveFailure::Diverged {
                    iterations: it + 1,
                    max: norm,
                });
            }
            if delta <= opts.tolerance * norm {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(SolveFailure::NoConvergence {
                iterations: opts.max_iterations,
            });
        }
        if let Some((i, &v)) = z.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
            return Err(SolveFailure::InvalidValue {
                state: states[i],
                value: v,
            });
        }
        z
    };

    let mut log_z = vec![f64::NEG_INFINITY; g.len()];
    for s in 0..g.len() {
        if g.terminal[s] {
            log_z[s] = 0.0;
        }
    }
    for (i, &s) in states.iter().enumerate() {
        log_z[s] = z[i].ln();
    }
    Ok(log_z)
}

/// `max |z - M z - b| / max(1, max z)`, evaluated with a common shift so that
/// large values do not overflow.
pub fn relative_residual(g: &DecisionGraph, log_w: &[f64], log_z: &[f64]) -> f64 {
    let shift = log_z
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let scaled = |lz: f64| (lz - shift).exp();
    let mut resid = 0.0f64;
    for s in 0..g.len() {
        let lhs = scaled(log_z[s]);
        let rhs = if g.terminal[s] {
            (-shift).exp()
        } else {
            g.range(s)
                .map(|tr| (log_w[tr] + log_z[g.targets[tr]] - shift).exp())
                .sum()
        };
        resid = resid.max((lhs - rhs).abs());
    }
    // exp(shift) == max(1, max z), so the shifted residual is already relative.
    resid
}

/// Choice probability of transition `tr` out of `s`.
#[inline]
pub fn transition_prob(g: &DecisionGraph, log_w: &[f64], log_z: &[f64], s: usize, tr: usize) -> f64 {
    let t = g.targets[tr];
    if log_z[t] == f64::NEG_INFINITY || log_z[s] == f64::NEG_INFINITY {
        0.0
    } else {
        (log_w[tr] + log_z[t] - log_z[s]).exp()
    }
}

/// Derivatives `d ln z(s) / d beta_j` as a row-major `len x arity` matrix.
///
/// Dividing `(I - M) dz = (dM) z` row-wise by `z(s)` gives
/// `g(s) = sum_t P(t|s) (x(s,t)/mu + g(t))`, which is what is solved here.
pub fn log_value_gradient(
    g: &DecisionGraph,
    log_w: &[f64],
    log_z: &[f64],
    features: &[Vec<f64>],
    mu: f64,
    arity: usize,
    opts: &SolverOptions,
) -> Result<Vec<f64>, SolveFailure> {
    let n = g.len();
    let mut grad = vec![0.0; n * arity];
    let local = |s: usize, grad: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|v| *v = 0.0);
        for tr in g.range(s) {
            let p = transition_prob(g, log_w, log_z, s, tr);
            if p == 0.0 {
                continue;
            }
            let t = g.targets[tr];
            let x = &features[g.edge_ids[tr]];
            for j in 0..arity {
                out[j] += p * (x[j] / mu + grad[t * arity + j]);
            }
        }
    };
    let mut buf = vec![0.0; arity];
    if let Some(order) = g.topological_order() {
        for &s in order.iter().rev() {
            if g.terminal[s] || log_z[s] == f64::NEG_INFINITY {
                continue;
            }
            local(s, &grad, &mut buf);
            grad[s * arity..(s + 1) * arity].copy_from_slice(&buf);
        }
        return Ok(grad);
    }

    let alive: Vec<bool> = log_z.iter().map(|v| v.is_finite()).collect();
    let (index, states) = unknowns(g, &alive);
    let m = states.len();
    let mut r = DMatrix::<f64>::zeros(m, arity);
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(m);
    for (i, &s) in states.iter().enumerate() {
        let mut row = Vec::new();
        for tr in g.range(s) {
            let p = transition_prob(g, log_w, log_z, s, tr);
            if p == 0.0 {
                continue;
            }
            let t = g.targets[tr];
            let x = &features[g.edge_ids[tr]];
            for j in 0..arity {
                r[(i, j)] += p * x[j] / mu;
            }
            if index[t] != usize::MAX {
                row.push((index[t], p));
            }
        }
        rows.push(row);
    }
    let sol = if m <= opts.direct_cutoff {
        let mut a = DMatrix::<f64>::identity(m, m);
        for (i, row) in rows.iter().enumerate() {
            for &(j, p) in row {
                a[(i, j)] -= p;
            }
        }
        a.lu().solve(&r).ok_or(SolveFailure::Singular)?
    } else {
        let mut x = r.clone();
        let mut converged = false;
        for _ in 0..opts.max_iterations {
            let mut next = r.clone();
            for (i, row) in rows.iter().enumerate() {
                for &(k, p) in row {
                    for j in 0..arity {
                        next[(i, j)] += p * x[(k, j)];
                    }
                }
            }
            let delta = (&next - &x).amax();
            let norm = next.amax().max(1.0);
            x = next;
            if !norm.is_finite() {
                return Err(SolveFailure::Diverged {
                    iterations: opts.max_iterations,
                    max: norm,
                });
            }
            if delta <= opts.tolerance * norm {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(SolveFailure::NoConvergence {
                iterations: opts.max_iterations,
            });
        }
        x
    };
    for (i, &s) in states.iter().enumerate() {
        for j in 0..arity {
            grad[s * arity + j] = sol[(i, j)];
        }
    }
    Ok(grad)
}

/// Solve the value recursion with a state-dependent scale:
/// `V(s)/mu_s = ln sum_t exp((v(t|s) + V(t))/mu_s)`. Returns `V` (not `V/mu`).
pub fn solve_scaled(
    g: &DecisionGraph,
    edge_utility: &[f64],
    mu: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<f64>, SolveFailure> {
    let n = g.len();
    let update = |s: usize, v: &[f64]| -> f64 {
        if g.terminal[s] {
            return 0.0;
        }
        let m = mu[s];
        m * log_sum_exp(
            g.range(s)
                .map(|tr| (edge_utility[g.edge_ids[tr]] + v[g.targets[tr]]) / m),
        )
    };
    let mut v = vec![f64::NEG_INFINITY; n];
    if let Some(order) = g.topological_order() {
        for &s in order.iter().rev() {
            v[s] = update(s, &v);
        }
        return Ok(v);
    }
    for s in 0..n {
        if g.terminal[s] {
            v[s] = 0.0;
        }
    }
    for it in 0..opts.max_iterations {
        let next: Vec<f64> = (0..n).map(|s| update(s, &v)).collect();
        let mut delta = 0.0f64;
        let mut norm = 1.0f64;
        for (a, b) in next.iter().zip(&v) {
            if a.is_finite() {
                norm = norm.max(a.abs());
                delta = delta.max(if b.is_finite() { (a - b).abs() } else { f64::INFINITY });
            } else if *a == f64::INFINITY || a.is_nan() {
                return Err(SolveFailure::Diverged {
                    iterations: it + 1,
                    max: *a,
                });
            }
        }
        v = next;
        if norm > opts.divergence_bound {
            return Err(SolveFailure::Diverged {
                iterations: it + 1,
                max: norm,
            });
        }
        if delta <= opts.tolerance * norm {
            return Ok(v);
        }
    }
    Err(SolveFailure::NoConvergence {
        iterations: opts.max_iterations,
    })
}

/// Expected number of visits to each transition for a walk started at `origin`
/// under the given transition probabilities.
pub fn transition_flows(
    g: &DecisionGraph,
    prob: &[f64],
    origin: usize,
    opts: &SolverOptions,
) -> Result<Vec<f64>, SolveFailure> {
    let n = g.len();
    let mut visits = vec![0.0; n];
    if let Some(order) = g.topological_order() {
        visits[origin] = 1.0;
        for &s in order {
            if visits[s] == 0.0 {
                continue;
            }
            for tr in g.range(s) {
                visits[g.targets[tr]] += visits[s] * prob[tr];
            }
        }
    } else if n <= opts.direct_cutoff {
        // (I - P^T) x = e_origin
        let mut a = DMatrix::<f64>::identity(n, n);
        for s in 0..n {
            for tr in g.range(s) {
                a[(g.targets[tr], s)] -= prob[tr];
            }
        }
        let mut rhs = DVector::zeros(n);
        rhs[origin] = 1.0;
        let sol = a.lu().solve(&rhs).ok_or(SolveFailure::Singular)?;
        visits.copy_from_slice(sol.as_slice());
    } else {
        let mut converged = false;
        for _ in 0..opts.max_iterations {
            let mut next = vec![0.0; n];
            next[origin] = 1.0;
            for s in 0..n {
                for tr in g.range(s) {
                    next[g.targets[tr]] += visits[s] * prob[tr];
                }
            }
            let delta = next
                .iter()
                .zip(&visits)
                .fold(0.0f64, |d, (a, b)| d.max((a - b).abs()));
            visits = next;
            if delta <= opts.tolerance {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(SolveFailure::NoConvergence {
                iterations: opts.max_iterations,
            });
        }
    }
    let mut flows = vec![0.0; g.num_transitions()];
    for s in 0..n {
        for tr in g.range(s) {
            flows[tr] = visits[s] * prob[tr];
        }
    }
    Ok(flows)
}
