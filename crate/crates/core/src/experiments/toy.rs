use std::fmt::Write as _;

use crate::crl::{build_extended, path_prob_crl, solve_erl};
use crate::error::Result;
use crate::network::{assets, Network, Observation};
use crate::rl::{path_prob_rl, solve_rl, UtilitySpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ToyCell {
    pub table: &'static str,
    pub column: String,
    pub path: String,
    pub expected: f64,
    pub computed: f64,
    pub tolerance: f64,
}

impl ToyCell {
    pub fn pass(&self) -> bool {
        (self.computed - self.expected).abs() <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyReport {
    pub cells: Vec<ToyCell>,
}

impl ToyReport {
    pub fn all_pass(&self) -> bool {
        self.cells.iter().all(ToyCell::pass)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut last = ("", String::new());
        for c in &self.cells {
            if (c.table, c.column.clone()) != last {
                let _ = writeln!(s, "\n{} / {}", c.table, c.column);
                let _ = writeln!(s, "{:<20} {:>9} {:>9}  result", "path", "expected", "computed");
                last = (c.table, c.column.clone());
            }
            let _ = writeln!(
                s,
                "{:<20} {:>9.3} {:>9.3}  {}",
                c.path,
                c.expected,
                c.computed,
                if c.pass() { "pass" } else { "FAIL" }
            );
        }
        let failed = self.cells.iter().filter(|c| !c.pass()).count();
        let _ = writeln!(s, "\n{} cells, {} failed", self.cells.len(), failed);
        s
    }
}

const TRAVEL_TIME_PATHS: [&[usize]; 4] = [&[1, 2], &[1, 3, 5, 2], &[1, 3, 4, 5, 2], &[1, 3, 4, 6, 2]];
const RECHARGE_PATHS: [&[usize]; 4] = [&[1, 2], &[1, 3, 4, 5, 2], &[1, 3, 4, 5, 6, 7, 2], &[1, 3, 6, 7, 2]];

fn quanta(net: &Network, hours: f64) -> i64 {
    (hours / net.cost_quantum()).round() as i64
}

fn crl_column(
    net: &Network,
    u: &UtilitySpec,
    hours: f64,
    paths: &[&[usize]],
) -> Result<Vec<f64>> {
    let xs = build_extended(net, assets::TOY_ORIGIN, &[quanta(net, hours)])?;
    let evt = solve_erl(&xs, net, u)?;
    paths
        .iter()
        .map(|p| path_prob_crl(&xs, net, u, &evt, &Observation(assets::from_labels(p))))
        .collect()
}

/// Path probabilities on both toy networks under `v = -2 * travel_time`,
/// against the reference values.
pub fn run_toy_tables() -> Result<ToyReport> {
    let u = UtilitySpec::new(vec![-2.0], 1.0)?;
    let mut cells = Vec::new();
    let mut push = |table: &'static str, column: String, paths: &[&[usize]], expected: &[f64], computed: &[f64], tol: f64| {
        for i in 0..paths.len() {
            cells.push(ToyCell {
                table,
                column: column.clone(),
                path: assets::label_path(&assets::from_labels(paths[i])),
                expected: expected[i],
                computed: computed[i],
                tolerance: tol,
            });
        }
    };

    let net = assets::toy_travel_time();
    let vt = solve_rl(&net, &u)?;
    let rl: Vec<f64> = TRAVEL_TIME_PATHS
        .iter()
        .map(|p| path_prob_rl(&net, &u, &vt, &Observation(assets::from_labels(p))))
        .collect::<Result<_>>()?;
    push("travel-time toy", "RL".into(), &TRAVEL_TIME_PATHS, &[0.083, 0.610, 0.224, 0.083], &rl, 1e-3);
    let crl = crl_column(&net, &u, 2.5, &TRAVEL_TIME_PATHS)?;
    push("travel-time toy", "CRL alpha=2.5h".into(), &TRAVEL_TIME_PATHS, &[0.0, 0.731, 0.269, 0.0], &crl, 1e-3);

    let net = assets::toy_recharge();
    for (alpha, expected) in [
        (5.0, [0.644, 0.237, 0.032, 0.087]),
        (4.0, [0.0, 0.665, 0.090, 0.245]),
        (3.0, [0.0, 0.0, 1.0, 0.0]),
    ] {
        let crl = crl_column(&net, &u, alpha, &RECHARGE_PATHS)?;
        push("recharge toy", format!("CRL alpha={alpha}"), &RECHARGE_PATHS, &expected, &crl, 5e-3);
    }
    Ok(ToyReport { cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_cells_pass_and_repeat() {
        let a = run_toy_tables().unwrap();
        assert_eq!(a.cells.len(), 20);
        assert!(a.all_pass(), "{}", a.render());
        let b = run_toy_tables().unwrap();
        assert_eq!(a.render(), b.render());
        let zeros: Vec<f64> = a.cells.iter().filter(|c| c.expected == 0.0).map(|c| c.computed).collect();
        assert!(zeros.iter().all(|&p| p == 0.0));
    }
}
