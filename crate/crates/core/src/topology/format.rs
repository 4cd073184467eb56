//! Line-oriented topology files.
//!
//! ```text
//! # comment
//! [nodes]
//! n01 41.3790 2.1350 1.0 0.99
//! [links]
//! n01 n02 13.6 2.0 0.0
//! ```

use std::fmt::Write as _;
use std::io::BufRead;

use super::{LinkSpec, NodeSpec, Topology, TopologyError};
use crate::scalar::Scalar;

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Nodes,
    Links,
}

fn field<T: Scalar>(tok: &str, name: &str, line: usize) -> Result<T, TopologyError> {
    tok.parse::<T>().map_err(|_| TopologyError::Parse {
        line,
        msg: format!("invalid {name} `{tok}`"),
    })
}

/// Parses and validates a topology from a reader.
pub fn parse_topology<T: Scalar, R: BufRead>(source: R) -> Result<Topology<T>, TopologyError> {
    let mut section = Section::None;
    let mut nodes = Vec::new();
    let mut links = Vec::new();
    for (i, raw) in source.lines().enumerate() {
        let line = i + 1;
        let raw = raw.map_err(|e| TopologyError::Parse {
            line,
            msg: e.to_string(),
        })?;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        match text {
            "[nodes]" => {
                section = Section::Nodes;
                continue;
            }
            "[links]" => {
                section = Section::Links;
                continue;
            }
            _ if text.starts_with('[') => {
                return Err(TopologyError::Parse {
                    line,
                    msg: format!("unknown section `{text}`"),
                })
            }
            _ => {}
        }
        let toks: Vec<&str> = text.split_whitespace().collect();
        match section {
            Section::None => {
                return Err(TopologyError::Parse {
                    line,
                    msg: "record outside of a [nodes] or [links] section".into(),
                })
            }
            Section::Nodes => {
                if toks.len() != 5 {
                    return Err(TopologyError::Parse {
                        line,
                        msg: format!("node record needs 5 fields, found {}", toks.len()),
                    });
                }
                nodes.push(NodeSpec {
                    id: toks[0].to_string(),
                    lat: field(toks[1], "latitude", line)?,
                    lon: field(toks[2], "longitude", line)?,
                    cpu_capacity: field(toks[3], "cpu capacity", line)?,
                    availability: field(toks[4], "availability", line)?,
                });
            }
            Section::Links => {
                if toks.len() != 4 && toks.len() != 5 {
                    return Err(TopologyError::Parse {
                        line,
                        msg: format!("link record needs 4 or 5 fields, found {}", toks.len()),
                    });
                }
                links.push(LinkSpec {
                    a: toks[0].to_string(),
                    b: toks[1].to_string(),
                    bandwidth_mbps: field(toks[2], "bandwidth", line)?,
                    latency_ms: field(toks[3], "latency", line)?,
                    loss: match toks.get(4) {
                        Some(t) => field(t, "loss", line)?,
                        None => T::zero(),
                    },
                });
            }
        }
    }
    Topology::new(nodes, links)
}

/// Canonical text form; parsing it back yields an identical topology.
pub fn write_topology<T: Scalar>(t: &Topology<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {} nodes, {} links", t.len(), t.links().len());
    out.push_str("[nodes]\n# id lat lon cpu availability\n");
    for n in t.nodes() {
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            n.id, n.lat, n.lon, n.cpu_capacity, n.availability
        );
    }
    out.push_str("[links]\n# id_a id_b bandwidth_mbps latency_ms loss\n");
    for l in t.links() {
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            l.a, l.b, l.bandwidth_mbps, l.latency_ms, l.loss
        );
    }
    out
}
