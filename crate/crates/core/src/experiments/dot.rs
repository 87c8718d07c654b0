use std::fmt::Write as _;

use crate::crl::{build_extended, edge_flows_crl, solve_erl};
use crate::error::Result;
use crate::network::{Network, StateId};
use crate::rl::{edge_flows_rl, solve_rl, UtilitySpec};

const MIN_WIDTH: f64 = 0.5;
const MAX_WIDTH: f64 = 6.0;

/// Probability that a trip from `origin` uses each edge, unconstrained when
/// `alpha` is `None`.
pub fn edge_probabilities(net: &Network, u: &UtilitySpec, alpha: Option<&[i64]>, origin: StateId) -> Result<Vec<f64>> {
    Ok(match alpha {
        None => {
            let vt = solve_rl(net, u)?;
            edge_flows_rl(net, u, &vt, origin)?
        }
        Some(a) => {
            let xs = build_extended(net, origin, a)?;
            let evt = solve_erl(&xs, net, u)?;
            edge_flows_crl(&xs, net, u, &evt)?
        }
    })
}

/// Graphviz digraph with 1-based node labels. Pen width grows linearly with the
/// edge probability; edges below `threshold_for_dashed` are dashed.
pub fn export_dot(net: &Network, edge_probs: &[f64], threshold_for_dashed: f64) -> String {
    let mut s = String::from("digraph network {\n  rankdir=LR;\n  node [shape=circle];\n");
    let _ = writeln!(s, "  {} [shape=doublecircle];", net.destination() + 1);
    for (id, e) in net.edges().iter().enumerate() {
        let p = edge_probs[id].clamp(0.0, 1.0);
        if p < threshold_for_dashed {
            let _ = writeln!(s, "  {} -> {} [style=dashed, penwidth={MIN_WIDTH:.2}, label=\"0\"];", e.from + 1, e.to + 1);
        } else {
            let width = MIN_WIDTH + (MAX_WIDTH - MIN_WIDTH) * p;
            let _ = writeln!(
                s,
                "  {} -> {} [style=solid, penwidth={width:.2}, label=\"{p:.3}\"];",
                e.from + 1,
                e.to + 1
            );
        }
    }
    s.push_str("}\n");
    s
}
