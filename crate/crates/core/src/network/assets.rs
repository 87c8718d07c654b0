//! Networks shipped with the crate.

use super::{load_network, Network, StateId};

pub const TOY_TRAVEL_TIME: &str = include_str!("../../assets/toy_travel_time.net");
pub const TOY_RECHARGE: &str = include_str!("../../assets/toy_recharge.net");
pub const GRID_RECHARGE: &str = include_str!("../../assets/grid_recharge.net");
pub const SIOUX_FALLS: &str = include_str!("../../assets/sioux_falls.net");

/// Origin of both toy networks (node 1).
pub const TOY_ORIGIN: StateId = 0;
/// Origin of the grid (bottom-left corner).
pub const GRID_ORIGIN: StateId = 0;
/// Origin used on the Sioux Falls network (node 1).
pub const SIOUX_FALLS_ORIGIN: StateId = 0;

fn parse(name: &str, text: &str) -> Network {
    load_network(text).unwrap_or_else(|e| panic!("shipped asset {name} is malformed: {e}"))
}

/// Six-node network with four routes of 3h, 2h, 2.5h and 3h.
pub fn toy_travel_time() -> Network {
    parse("toy_travel_time.net", TOY_TRAVEL_TIME)
}

/// Seven-node network with charging stations at nodes 4 and 7.
pub fn toy_recharge() -> Network {
    parse("toy_recharge.net", TOY_RECHARGE)
}

/// 5x5 directed grid with four charging stations.
pub fn grid_recharge() -> Network {
    parse("grid_recharge.net", GRID_RECHARGE)
}

/// Cyclic 24-node, 76-link network plus an absorbing exit state.
pub fn sioux_falls() -> Network {
    parse("sioux_falls.net", SIOUX_FALLS)
}

/// Node labels are 1-based state ids.
pub fn label_path(path: &[StateId]) -> String {
    let labels: Vec<String> = path.iter().map(|s| (s + 1).to_string()).collect();
    format!("[{}]", labels.join(","))
}

/// Inverse of [`label_path`] for literal label lists.
pub fn from_labels(labels: &[usize]) -> Vec<StateId> {
    labels.iter().map(|l| l - 1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assets_parse() {
        assert_eq!(toy_travel_time().num_states(), 6);
        assert_eq!(toy_recharge().num_edges(), 9);
        assert_eq!(grid_recharge().num_states(), 25);
        let sf = sioux_falls();
        assert_eq!(sf.num_states(), 25);
        // 76 road links plus the exit link.
        assert_eq!(sf.num_edges(), 77);
        assert!(!sf.is_acyclic());
    }
}
