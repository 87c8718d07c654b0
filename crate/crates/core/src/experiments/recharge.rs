use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::sweep::compare_models;
use super::{derive_seed, fmt_opt, write_csv};
use crate::error::{Error, Result};
use crate::network::{generate_geometric_dag, threshold_from_percent, Network, StateId};
use crate::rl::UtilitySpec;
use crate::simulation::{simulate, SimConfig, SimModel};

#[derive(Debug, Clone, PartialEq)]
pub struct RechargeSpec {
    pub dag_sizes: Vec<usize>,
    pub graphs_per_size: usize,
    /// Share of nodes that reset the energy count, origin and destination excluded.
    pub station_fraction: f64,
    /// Energy capacity as a fraction of the longest travel time.
    pub energy_fraction: f64,
    pub n_insample: usize,
    pub n_outsample: usize,
    pub beta_true: Vec<f64>,
    pub seed: u64,
}

impl Default for RechargeSpec {
    fn default() -> Self {
        RechargeSpec {
            dag_sizes: vec![20, 30, 40, 50],
            graphs_per_size: 5,
            station_fraction: 0.1,
            energy_fraction: 0.4,
            n_insample: 3000,
            n_outsample: 1000,
            beta_true: vec![-4.0, -0.1, -0.05, -0.3],
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RechargeRecord {
    pub size: usize,
    pub graph: usize,
    pub stations: Vec<StateId>,
    pub alpha: i64,
    pub in_rl: Option<f64>,
    pub in_crl: Option<f64>,
    pub out_rl: Option<f64>,
    pub out_crl: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RechargeReport {
    pub records: Vec<RechargeRecord>,
}

impl RechargeReport {
    /// In-sample CRL fit at least as good as RL wherever both were estimated.
    pub fn dominance_holds(&self) -> bool {
        self.records
            .iter()
            .filter_map(|r| Some((r.in_crl?, r.in_rl?)))
            .all(|(c, r)| c >= r)
    }

    pub fn render(&self) -> String {
        let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>5} {:>6} {:>9} {:>6} {:>10} {:>10} {:>10} {:>10}",
            "size", "graph", "stations", "alpha", "in_RL", "in_CRL", "out_RL", "out_CRL"
        );
        for r in &self.records {
            let _ = write!(
                s,
                "{:>5} {:>6} {:>9} {:>6} {:>10} {:>10} {:>10} {:>10}",
                r.size,
                r.graph,
                r.stations.len(),
                r.alpha,
                show(r.in_rl),
                show(r.in_crl),
                show(r.out_rl),
                show(r.out_crl)
            );
            if let Some(e) = &r.error {
                let _ = write!(s, "  ({e})");
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_csv(
            path,
            &["size", "graph", "stations", "alpha", "in_rl", "in_crl", "out_rl", "out_crl", "error"],
            self.records.iter().map(|r| {
                vec![
                    r.size.to_string(),
                    r.graph.to_string(),
                    r.stations.iter().map(|s| (s + 1).to_string()).collect::<Vec<_>>().join(";"),
                    r.alpha.to_string(),
                    fmt_opt(r.in_rl),
                    fmt_opt(r.in_crl),
                    fmt_opt(r.out_rl),
                    fmt_opt(r.out_crl),
                    r.error.clone().unwrap_or_default(),
                ]
            }),
        )
    }
}

/// Uniformly chosen reset nodes among `1..n-1`.
pub(crate) fn place_stations(n: usize, fraction: f64, seed: u64) -> Vec<StateId> {
    let candidates = n.saturating_sub(2);
    let k = ((fraction * n as f64).round() as usize).min(candidates);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<StateId> = sample(&mut rng, candidates, k).into_iter().map(|i| i + 1).collect();
    picked.sort_unstable();
    picked
}

fn run_instance(spec: &RechargeSpec, size: usize, graph: usize) -> RechargeRecord {
    let mut rec = RechargeRecord {
        size,
        graph,
        stations: Vec::new(),
        alpha: 0,
        in_rl: None,
        in_crl: None,
        out_rl: None,
        out_crl: None,
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let base = derive_seed(&[spec.seed, size as u64, graph as u64]);
        let dag = generate_geometric_dag(size, derive_seed(&[base, 0]))?.network;
        rec.stations = place_stations(size, spec.station_fraction, derive_seed(&[base, 1]));
        let resets: Vec<(StateId, usize)> = rec.stations.iter().map(|&s| (s, 0)).collect();
        let net: Network = dag.with_resets(&resets)?;
        rec.alpha = threshold_from_percent(&net, 0, spec.energy_fraction)?;
        let alpha = [rec.alpha];
        let u = UtilitySpec::new(spec.beta_true.clone(), 1.0)?;
        let draw = |n, seed| simulate(&net, &u, Some(&alpha), &SimConfig::new(SimModel::Crl, n, seed, 0));
        let insample = draw(spec.n_insample, derive_seed(&[base, 2]))?;
        let outsample = draw(spec.n_outsample, derive_seed(&[base, 3]))?;
        let c = compare_models(&net, &alpha, &insample, &outsample)?;
        rec.in_rl = Some(c.in_rl);
        rec.in_crl = Some(c.in_crl);
        rec.out_rl = Some(c.out_rl);
        rec.out_crl = Some(c.out_crl);
        Ok(())
    })();
    if let Err(e) = outcome {
        rec.error = Some(e.to_string());
    }
    rec
}

/// CRL-generated data on DAGs with random charging stations, fitted by both models.
pub fn run_recharge_study(spec: &RechargeSpec) -> Result<RechargeReport> {
    if spec.dag_sizes.is_empty() || spec.graphs_per_size == 0 || spec.n_insample == 0 || spec.n_outsample == 0 {
        return Err(Error::Argument("recharge study counts must be positive".into()));
    }
    if !(0.0..=1.0).contains(&spec.station_fraction) {
        return Err(Error::Argument(format!("station fraction {} outside [0, 1]", spec.station_fraction)));
    }
    let jobs: Vec<(usize, usize)> = spec
        .dag_sizes
        .iter()
        .flat_map(|&s| (0..spec.graphs_per_size).map(move |g| (s, g)))
        .collect();
    let records = jobs.into_par_iter().map(|(s, g)| run_instance(spec, s, g)).collect();
    Ok(RechargeReport { records })
}
