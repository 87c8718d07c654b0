use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::{derive_seed, fmt_opt, mean, write_csv};
use crate::error::{Error, Result};
use crate::estimation::{estimate_problem, percent_improve, EstimationConfig, LikelihoodProblem, Model};
use crate::network::{generate_geometric_dag, longest_route_cost, threshold_from_percent, Network, Observation};
use crate::rl::UtilitySpec;
use crate::simulation::{simulate, SimConfig, SimModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    /// RL draws, discarding routes that break the bound.
    Rl,
    Crl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub dag_sizes: Vec<usize>,
    pub graphs_per_size: usize,
    /// Fractions of the longest travel time, each in (0, 1].
    pub thresholds: Vec<f64>,
    pub trials: usize,
    pub n_insample: usize,
    pub n_outsample: usize,
    pub generator: Generator,
    pub beta_true: Vec<f64>,
    pub seed: u64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            dag_sizes: vec![20, 30, 40, 50],
            graphs_per_size: 5,
            thresholds: (2..=9).map(|k| k as f64 / 10.0).collect(),
            trials: 10,
            n_insample: 3000,
            n_outsample: 1000,
            generator: Generator::Crl,
            beta_true: vec![-4.0, -0.1, -0.05, -0.3],
            seed: 2024,
        }
    }
}

impl SweepSpec {
    fn validate(&self) -> Result<()> {
        let counts = [self.graphs_per_size, self.trials, self.n_insample, self.n_outsample];
        if self.dag_sizes.is_empty() || self.thresholds.is_empty() || counts.contains(&0) {
            return Err(Error::Argument("sweep counts must be positive".into()));
        }
        if let Some(t) = self.thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(Error::Argument(format!("threshold {t} outside (0, 1]")));
        }
        Ok(())
    }

    /// Seed of graph `graph` of size `size`; shared by every threshold and trial.
    pub fn graph_seed(&self, size: usize, graph: usize) -> u64 {
        derive_seed(&[self.seed, size as u64, graph as u64])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub size: usize,
    pub graph: usize,
    pub threshold: f64,
    pub trial: usize,
    pub alpha: i64,
    /// Whether some route from the origin exceeds the bound.
    pub pruned: bool,
    pub in_rl: Option<f64>,
    pub in_crl: Option<f64>,
    pub out_rl: Option<f64>,
    pub out_crl: Option<f64>,
    pub beta_rl: Vec<f64>,
    pub beta_crl: Vec<f64>,
    pub std_err_crl: Vec<f64>,
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn improve_in(&self) -> Option<f64> {
        percent_improve(self.in_crl?, self.in_rl?).ok()
    }

    pub fn improve_out(&self) -> Option<f64> {
        percent_improve(self.out_crl?, self.out_rl?).ok()
    }
}

/// Mean over the successful trials of one `(size, threshold)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub size: usize,
    pub threshold: f64,
    pub trials_ok: usize,
    pub trials_failed: usize,
    pub improve_in: Option<f64>,
    pub improve_out: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub records: Vec<TrialRecord>,
}

impl SweepReport {
    pub fn cells(&self) -> Vec<SweepCell> {
        let mut keys: Vec<(usize, f64)> = Vec::new();
        for r in &self.records {
            if !keys.contains(&(r.size, r.threshold)) {
                keys.push((r.size, r.threshold));
            }
        }
        keys.into_iter()
            .map(|(size, threshold)| {
                let rs: Vec<&TrialRecord> = self
                    .records
                    .iter()
                    .filter(|r| r.size == size && r.threshold == threshold)
                    .collect();
                let ok: Vec<&&TrialRecord> = rs.iter().filter(|r| r.error.is_none()).collect();
                SweepCell {
                    size,
                    threshold,
                    trials_ok: ok.len(),
                    trials_failed: rs.len() - ok.len(),
                    improve_in: mean(ok.iter().filter_map(|r| r.improve_in())),
                    improve_out: mean(ok.iter().filter_map(|r| r.improve_out())),
                }
            })
            .collect()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>5} {:>9} {:>6} {:>7} {:>14} {:>15}",
            "size", "threshold", "ok", "failed", "improve_in_%", "improve_out_%"
        );
        let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
        for c in self.cells() {
            let _ = writeln!(
                s,
                "{:>5} {:>8.0}% {:>6} {:>7} {:>14} {:>15}",
                c.size,
                100.0 * c.threshold,
                c.trials_ok,
                c.trials_failed,
                show(c.improve_in),
                show(c.improve_out)
            );
        }
        s
    }

    pub fn write_cells_csv(&self, path: &Path) -> Result<()> {
        write_csv(
            path,
            &["size", "threshold", "trials_ok", "trials_failed", "improve_in", "improve_out"],
            self.cells().into_iter().map(|c| {
                vec![
                    c.size.to_string(),
                    c.threshold.to_string(),
                    c.trials_ok.to_string(),
                    c.trials_failed.to_string(),
                    fmt_opt(c.improve_in),
                    fmt_opt(c.improve_out),
                ]
            }),
        )
    }

    pub fn write_trials_csv(&self, path: &Path) -> Result<()> {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(";");
        write_csv(
            path,
            &[
                "size", "graph", "threshold", "trial", "alpha", "pruned", "in_rl", "in_crl", "out_rl", "out_crl",
                "improve_in", "improve_out", "beta_rl", "beta_crl", "error",
            ],
            self.records.iter().map(|r| {
                vec![
                    r.size.to_string(),
                    r.graph.to_string(),
                    r.threshold.to_string(),
                    r.trial.to_string(),
                    r.alpha.to_string(),
                    r.pruned.to_string(),
                    fmt_opt(r.in_rl),
                    fmt_opt(r.in_crl),
                    fmt_opt(r.out_rl),
                    fmt_opt(r.out_crl),
                    fmt_opt(r.improve_in()),
                    fmt_opt(r.improve_out()),
                    join(&r.beta_rl),
                    join(&r.beta_crl),
                    r.error.clone().unwrap_or_default(),
                ]
            }),
        )
    }
}

/// Simulated in- and out-of-sample sets, then RL and CRL fits on the former.
pub(crate) struct Comparison {
    pub in_rl: f64,
    pub in_crl: f64,
    pub out_rl: f64,
    pub out_crl: f64,
    pub beta_rl: Vec<f64>,
    pub beta_crl: Vec<f64>,
    pub std_err_crl: Vec<f64>,
}

pub(crate) fn compare_models(
    net: &Network,
    alpha: &[i64],
    insample: &[Observation],
    outsample: &[Observation],
) -> Result<Comparison> {
    let cfg = EstimationConfig::default();
    let fit = |model: Model| -> Result<(f64, f64, Vec<f64>, Vec<f64>)> {
        let problem = LikelihoodProblem::new(net, model.clone(), cfg.mu, insample)?;
        let res = estimate_problem(&problem, &cfg)?;
        if !res.converged {
            return Err(Error::Argument(format!(
                "{} estimation did not converge: {}",
                model.name(),
                res.failure.unwrap_or_default()
            )));
        }
        let out = LikelihoodProblem::new(net, model, cfg.mu, outsample)?.loglik(&res.beta)?;
        Ok((res.avg_loglik, out / outsample.len() as f64, res.beta, res.std_err))
    };
    let (in_rl, out_rl, beta_rl, _) = fit(Model::Rl)?;
    let (in_crl, out_crl, beta_crl, std_err_crl) = fit(Model::Crl { alpha: alpha.to_vec() })?;
    Ok(Comparison {
        in_rl,
        in_crl,
        out_rl,
        out_crl,
        beta_rl,
        beta_crl,
        std_err_crl,
    })
}

fn draw(net: &Network, u: &UtilitySpec, alpha: &[i64], generator: Generator, n: usize, seed: u64) -> Result<Vec<Observation>> {
    let model = match generator {
        Generator::Rl => SimModel::Rl,
        Generator::Crl => SimModel::Crl,
    };
    let mut cfg = SimConfig::new(model, n, seed, 0);
    cfg.rejection = generator == Generator::Rl;
    simulate(net, u, Some(alpha), &cfg)
}

fn run_trial(spec: &SweepSpec, size: usize, graph: usize, ti: usize, trial: usize) -> TrialRecord {
    let threshold = spec.thresholds[ti];
    let mut rec = TrialRecord {
        size,
        graph,
        threshold,
        trial,
        alpha: 0,
        pruned: false,
        in_rl: None,
        in_crl: None,
        out_rl: None,
        out_crl: None,
        beta_rl: Vec::new(),
        beta_crl: Vec::new(),
        std_err_crl: Vec::new(),
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let net = generate_geometric_dag(size, spec.graph_seed(size, graph))?.network;
        rec.alpha = threshold_from_percent(&net, 0, threshold)?;
        rec.pruned = longest_route_cost(&net, 0, 0)? > rec.alpha;
        let u = UtilitySpec::new(spec.beta_true.clone(), 1.0)?;
        let base = derive_seed(&[spec.seed, size as u64, graph as u64, ti as u64, trial as u64]);
        let alpha = [rec.alpha];
        let insample = draw(&net, &u, &alpha, spec.generator, spec.n_insample, derive_seed(&[base, 0]))?;
        let outsample = draw(&net, &u, &alpha, spec.generator, spec.n_outsample, derive_seed(&[base, 1]))?;
        let c = compare_models(&net, &alpha, &insample, &outsample)?;
        rec.in_rl = Some(c.in_rl);
        rec.in_crl = Some(c.in_crl);
        rec.out_rl = Some(c.out_rl);
        rec.out_crl = Some(c.out_crl);
        rec.beta_rl = c.beta_rl;
        rec.beta_crl = c.beta_crl;
        rec.std_err_crl = c.std_err_crl;
        Ok(())
    })();
    if let Err(e) = outcome {
        rec.error = Some(e.to_string());
    }
    rec
}

/// Every `(size, graph, threshold, trial)` job, run in parallel. Failed trials
/// are recorded and the sweep continues.
pub fn run_threshold_sweep(spec: &SweepSpec) -> Result<SweepReport> {
    spec.validate()?;
    let mut jobs = Vec::new();
    for &size in &spec.dag_sizes {
        for ti in 0..spec.thresholds.len() {
            for graph in 0..spec.graphs_per_size {
                for trial in 0..spec.trials {
                    jobs.push((size, graph, ti, trial));
                }
            }
        }
    }
    let records = jobs
        .into_par_iter()
        .map(|(size, graph, ti, trial)| run_trial(spec, size, graph, ti, trial))
        .collect();
    Ok(SweepReport { records })
}
