use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::{derive_seed, fmt_opt, write_csv};
use crate::error::{Error, Result};
use crate::estimation::{estimate_problem, EstimationConfig, LikelihoodProblem, Model};
use crate::network::{Network, StateId};
use crate::rl::{solve_rl, UtilitySpec};
use crate::simulation::{simulate, SimConfig, SimModel};

#[derive(Debug, Clone, PartialEq)]
pub struct StabilitySpec {
    /// Bounds on the number of links, one row each.
    pub alphas: Vec<i64>,
    pub beta: Vec<f64>,
    pub n_insample: usize,
    pub n_outsample: usize,
    pub origin: StateId,
    pub seed: u64,
}

impl Default for StabilitySpec {
    fn default() -> Self {
        StabilitySpec {
            alphas: vec![10, 15, 20, 25],
            beta: vec![-0.5, 0.0, 1.0, -0.1, -0.05, -0.3],
            n_insample: 3000,
            n_outsample: 1000,
            origin: 0,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub alpha: i64,
    pub rl_avg: Option<f64>,
    pub rl_error: Option<String>,
    pub crl_in: Option<f64>,
    pub crl_out: Option<f64>,
    pub crl_beta: Vec<f64>,
    pub crl_converged: bool,
    pub crl_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// Outcome of solving the unconstrained model at the generating coefficients.
    pub rl_at_truth: Option<String>,
    pub rows: Vec<StabilityRow>,
}

impl StabilityReport {
    /// Every CRL fit converged and the average log-likelihood falls strictly as the bound grows.
    pub fn crl_decreasing(&self) -> bool {
        let lls: Option<Vec<f64>> = self
            .rows
            .iter()
            .map(|r| r.crl_converged.then_some(r.crl_in).flatten())
            .collect();
        lls.is_some_and(|v| v.windows(2).all(|w| w[1] < w[0]))
    }

    pub fn rl_failed_everywhere(&self) -> bool {
        self.rows.iter().all(|r| r.rl_avg.is_none())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        if let Some(e) = &self.rl_at_truth {
            let _ = writeln!(s, "RL at the generating coefficients: {e}");
        }
        let _ = writeln!(s, "{:>6} {:>10} {:>10} {:>10}", "alpha", "RL", "CRL", "CRL_out");
        let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"));
        for r in &self.rows {
            let _ = write!(
                s,
                "{:>6} {:>10} {:>10} {:>10}",
                r.alpha,
                show(r.rl_avg),
                show(r.crl_in),
                show(r.crl_out)
            );
            if let Some(e) = &r.crl_error {
                let _ = write!(s, "  (CRL: {e})");
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_csv(
            path,
            &["alpha", "rl_avg_loglik", "rl_error", "crl_avg_loglik", "crl_out_avg_loglik", "crl_converged", "crl_error"],
            self.rows.iter().map(|r| {
                vec![
                    r.alpha.to_string(),
                    fmt_opt(r.rl_avg),
                    r.rl_error.clone().unwrap_or_default(),
                    fmt_opt(r.crl_in),
                    fmt_opt(r.crl_out),
                    r.crl_converged.to_string(),
                    r.crl_error.clone().unwrap_or_default(),
                ]
            }),
        )
    }
}

fn run_row(net: &Network, spec: &StabilitySpec, alpha: i64) -> StabilityRow {
    let mut row = StabilityRow {
        alpha,
        rl_avg: None,
        rl_error: None,
        crl_in: None,
        crl_out: None,
        crl_beta: Vec::new(),
        crl_converged: false,
        crl_error: None,
    };
    let cfg = EstimationConfig::default();
    let data = (|| -> Result<_> {
        let u = UtilitySpec::new(spec.beta.clone(), 1.0)?;
        let base = derive_seed(&[spec.seed, alpha as u64]);
        let draw = |n, seed| simulate(net, &u, Some(&[alpha]), &SimConfig::new(SimModel::Crl, n, seed, spec.origin));
        Ok((draw(spec.n_insample, derive_seed(&[base, 0]))?, draw(spec.n_outsample, derive_seed(&[base, 1]))?))
    })();
    let (insample, outsample) = match data {
        Ok(d) => d,
        Err(e) => {
            row.crl_error = Some(e.to_string());
            return row;
        }
    };

    let crl = (|| -> Result<()> {
        let model = Model::Crl { alpha: vec![alpha] };
        let problem = LikelihoodProblem::new(net, model.clone(), cfg.mu, &insample)?;
        let res = estimate_problem(&problem, &cfg)?;
        row.crl_in = Some(res.avg_loglik);
        row.crl_converged = res.converged;
        if let Some(f) = res.failure {
            row.crl_error = Some(f);
        }
        let out = LikelihoodProblem::new(net, model, cfg.mu, &outsample)?.loglik(&res.beta)?;
        row.crl_out = Some(out / outsample.len() as f64);
        row.crl_beta = res.beta;
        Ok(())
    })();
    if let Err(e) = crl {
        row.crl_error = Some(e.to_string());
    }

    let rl = LikelihoodProblem::new(net, Model::Rl, cfg.mu, &insample).and_then(|p| estimate_problem(&p, &cfg));
    match rl {
        Ok(res) if res.converged && res.avg_loglik.is_finite() => row.rl_avg = Some(res.avg_loglik),
        Ok(res) => row.rl_error = Some(res.failure.unwrap_or_else(|| "no finite likelihood".into())),
        Err(e) => row.rl_error = Some(e.to_string()),
    }
    row
}

/// RL against CRL with unit link costs on a cyclic network, one row per bound.
pub fn run_stability_contrast(net: &Network, spec: &StabilitySpec) -> Result<StabilityReport> {
    if net.constraint_arity() != 1 {
        return Err(Error::Argument("stability contrast expects one link-count constraint".into()));
    }
    if spec.alphas.is_empty() || spec.n_insample == 0 || spec.n_outsample == 0 {
        return Err(Error::Argument("stability contrast counts must be positive".into()));
    }
    let u = UtilitySpec::new(spec.beta.clone(), 1.0)?;
    let rl_at_truth = match solve_rl(net, &u) {
        Ok(_) => None,
        Err(e) => Some(e.to_string()),
    };
    let rows = spec.alphas.par_iter().map(|&a| run_row(net, spec, a)).collect();
    Ok(StabilityReport { rl_at_truth, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkBuilder;

    #[test]
    fn too_tight_bound_is_reported() {
        // Shortest route uses two links.
        let net = NetworkBuilder::new(3, 2)
            .attributes(["x"])
            .constraints(1, 1.0)
            .edge(0, 1, vec![1.0], vec![1])
            .edge(1, 0, vec![1.0], vec![1])
            .edge(1, 2, vec![1.0], vec![1])
            .build()
            .unwrap();
        let spec = StabilitySpec {
            alphas: vec![1],
            beta: vec![-1.0],
            n_insample: 10,
            n_outsample: 10,
            ..Default::default()
        };
        let report = run_stability_contrast(&net, &spec).unwrap();
        assert!(report.rows[0].crl_error.is_some());
        assert!(!report.crl_decreasing());
    }
}
