//! Line-oriented text formats for networks and observations.
//!
//! ```text
//! # comment
//! states 6
//! destination 1
//! attrs travel_time
//! constraints 1 quantum 0.5
//! reset 3 0
//! edge 0 1 3.0 6
//! ```
//!
//! Edge lines carry the attribute values followed by the integer costs. The
//! `attrs` and `constraints` headers must precede the first edge line.

use std::fmt::Write as _;
use std::str::FromStr;

use super::{Network, NetworkBuilder, Observation};
use crate::error::{Error, Result};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn field<T: FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| parse_err(line, format!("invalid {what} `{tok}`")))
}

fn strip_comment(raw: &str) -> &str {
    match raw.find('#') {
        Some(i) => &raw[..i],
        None => raw,
    }
}

pub fn load_network(source: &str) -> Result<Network> {
    let mut states: Option<usize> = None;
    let mut destination: Option<usize> = None;
    let mut attrs: Option<Vec<String>> = None;
    let mut constraints: Option<(usize, f64)> = None;
    let mut edges = Vec::new();
    let mut resets = Vec::new();

    for (i, raw) in source.lines().enumerate() {
        let line = i + 1;
        let mut toks = strip_comment(raw).split_whitespace();
        let Some(kw) = toks.next() else { continue };
        match kw {
            "states" => states = Some(field(toks.next(), line, "state count")?),
            "destination" => destination = Some(field(toks.next(), line, "destination")?),
            "attrs" => {
                if !edges.is_empty() {
                    return Err(parse_err(line, "`attrs` must precede edge lines"));
                }
                attrs = Some(toks.by_ref().map(str::to_owned).collect());
            }
            "constraints" => {
                if !edges.is_empty() {
                    return Err(parse_err(line, "`constraints` must precede edge lines"));
                }
                let k: usize = field(toks.next(), line, "constraint arity")?;
                match toks.next() {
                    Some("quantum") => {}
                    other => {
                        return Err(parse_err(
                            line,
                            format!("expected `quantum`, found {:?}", other.unwrap_or("end of line")),
                        ))
                    }
                }
                let q: f64 = field(toks.next(), line, "quantum")?;
                constraints = Some((k, q));
            }
            "reset" => {
                let s: usize = field(toks.next(), line, "reset state")?;
                let d: usize = field(toks.next(), line, "reset dimension")?;
                resets.push((line, s, d));
            }
            "edge" => {
                let n_attr = attrs.as_ref().map_or(0, Vec::len);
                let k = constraints.map_or(0, |c| c.0);
                let from: usize = field(toks.next(), line, "edge source")?;
                let to: usize = field(toks.next(), line, "edge target")?;
                let a = (0..n_attr)
                    .map(|_| field::<f64>(toks.next(), line, "attribute value"))
                    .collect::<Result<Vec<_>>>()?;
                let c = (0..k)
                    .map(|_| field::<i64>(toks.next(), line, "cost"))
                    .collect::<Result<Vec<_>>>()?;
                edges.push((line, from, to, a, c));
            }
            other => return Err(parse_err(line, format!("unknown keyword `{other}`"))),
        }
        if let Some(extra) = toks.next() {
            return Err(parse_err(line, format!("unexpected token `{extra}`")));
        }
    }

    let n = states.ok_or_else(|| parse_err(0, "missing `states` header"))?;
    let d = destination.ok_or_else(|| parse_err(0, "missing `destination` header"))?;
    if d >= n {
        return Err(Error::Invalid(format!("destination {d} out of range (0..{n})")));
    }
    let (k, q) = constraints.unwrap_or((0, 1.0));
    let mut b = NetworkBuilder::new(n, d)
        .attributes(attrs.unwrap_or_default())
        .constraints(k, q);
    for (line, from, to, a, c) in edges {
        if from >= n || to >= n {
            return Err(parse_err(line, format!("edge ({from}, {to}) references an unknown state")));
        }
        if from == d {
            return Err(parse_err(line, format!("destination {d} cannot have outgoing edges")));
        }
        b.push_edge(from, to, a, c);
    }
    for (line, s, dim) in resets {
        if s >= n || dim >= k {
            return Err(parse_err(line, format!("reset ({s}, {dim}) out of range")));
        }
        b.push_reset(s, dim);
    }
    b.build()
}

pub fn save_network(net: &Network) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "states {}", net.num_states());
    let _ = writeln!(out, "destination {}", net.destination());
    let _ = write!(out, "attrs");
    for a in net.attribute_names() {
        let _ = write!(out, " {a}");
    }
    out.push('\n');
    let _ = writeln!(
        out,
        "constraints {} quantum {}",
        net.constraint_arity(),
        net.cost_quantum()
    );
    for (s, d) in net.resets() {
        let _ = writeln!(out, "reset {s} {d}");
    }
    for e in net.edges() {
        let _ = write!(out, "edge {} {}", e.from, e.to);
        for a in &e.attributes {
            let _ = write!(out, " {a}");
        }
        for c in &e.costs {
            let _ = write!(out, " {c}");
        }
        out.push('\n');
    }
    out
}

/// One path per line, whitespace-separated state ids. Blank lines and `#` comments are skipped.
pub fn load_observations(source: &str) -> Result<Vec<Observation>> {
    let mut obs = Vec::new();
    for (i, raw) in source.lines().enumerate() {
        let body = strip_comment(raw);
        if body.trim().is_empty() {
            continue;
        }
        let path = body
            .split_whitespace()
            .map(|t| field::<usize>(Some(t), i + 1, "state id"))
            .collect::<Result<Vec<_>>>()?;
        obs.push(Observation(path));
    }
    Ok(obs)
}

pub fn save_observations(obs: &[Observation]) -> String {
    let mut out = String::new();
    for o in obs {
        let line: Vec<String> = o.states().iter().map(ToString::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_edge_list() {
        let net = load_network("states 1\ndestination 0\n").unwrap();
        assert_eq!(net.num_edges(), 0);
        assert_eq!(net.destination(), 0);
    }

    #[test]
    fn unknown_state_is_parse_error() {
        let src = "states 2\ndestination 1\nattrs tt\nedge 0 7 1.0\n";
        match load_network(src) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn destination_with_out_edges_rejected() {
        let src = "states 2\ndestination 1\nedge 1 0\n";
        assert!(matches!(load_network(src), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn malformed_lines() {
        assert!(load_network("states x\ndestination 0\n").is_err());
        assert!(load_network("states 2\ndestination 1\nattrs a\nedge 0 1\n").is_err());
        assert!(load_network("states 2\ndestination 1\nedge 0 1 9\n").is_err());
        assert!(load_network("states 2\ndestination 1\nbogus\n").is_err());
        assert!(load_network("destination 1\n").is_err());
        assert!(load_network("states 2\ndestination 1\nconstraints 1 q 0.5\n").is_err());
    }

    #[test]
    fn comments_and_resets() {
        let src = "# toy\nstates 3 # three\ndestination 2\nattrs tt\nconstraints 1 quantum 0.5\nreset 1 0\nedge 0 1 1.0 2\nedge 1 2 0.5 -1\n";
        let net = load_network(src).unwrap();
        assert!(net.is_reset(1, 0));
        assert!(!net.is_reset(0, 0));
        assert_eq!(net.edge(1).costs, vec![-1]);
    }

    #[test]
    fn observations_parse() {
        let obs = load_observations("0 2 4 1\n\n# skip\n0 1\n").unwrap();
        assert_eq!(obs, vec![Observation(vec![0, 2, 4, 1]), Observation(vec![0, 1])]);
        assert_eq!(load_observations(&save_observations(&obs)).unwrap(), obs);
        assert!(load_observations("0 x 1\n").is_err());
    }

    fn arb_network() -> impl Strategy<Value = Network> {
        (2usize..7, 0usize..3, 0usize..3).prop_flat_map(|(n, n_attr, k)| {
            let pairs: Vec<(usize, usize)> = (0..n - 1)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .collect();
            (
                proptest::sample::subsequence(pairs.clone(), 0..=pairs.len()),
                proptest::collection::vec(
                    (
                        proptest::collection::vec(-10.0f64..10.0, n_attr),
                        proptest::collection::vec(-5i64..6, k),
                    ),
                    pairs.len(),
                ),
                proptest::collection::vec((0..n, 0..k.max(1)), 0..3),
                0.01f64..2.0,
            )
                .prop_map(move |(chosen, payloads, resets, q)| {
                    let mut b = NetworkBuilder::new(n, n - 1)
                        .attributes((0..n_attr).map(|i| format!("a{i}")))
                        .constraints(k, q);
                    for ((i, j), (a, c)) in chosen.into_iter().zip(payloads) {
                        b.push_edge(i, j, a, c);
                    }
                    if k > 0 {
                        for (s, d) in resets {
                            b.push_reset(s, d);
                        }
                    }
                    b.build().unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn round_trip(net in arb_network()) {
            let text = save_network(&net);
            let back = load_network(&text).unwrap();
            prop_assert_eq!(&back, &net);
            prop_assert_eq!(save_network(&back), text);
        }
    }
}
