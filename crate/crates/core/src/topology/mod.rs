//! Wireless mesh topologies: nodes, links and the path queries the rest of the
//! simulator is built on.
//!
//! Nodes are kept sorted by id, so a [`NodeIdx`] order is the id order. That
//! makes the lexicographic tie-break on node-id sequences a comparison of index
//! sequences.

mod format;
mod synth;

use std::collections::{HashMap, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::scalar::Scalar;

pub use format::{parse_topology, write_topology};
pub use synth::{gateway_bandwidths, synth_topology, SynthProfile};

/// Dense index of a node inside one [`Topology`]. Ordered like the node ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeIdx(pub usize);

impl fmt::Display for NodeIdx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeSpec<T> {
    pub id: String,
    pub lat: T,
    pub lon: T,
    /// Relative compute units per second; 1.0 is an RPi3-class node.
    pub cpu_capacity: T,
    pub availability: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkSpec<T> {
    pub a: String,
    pub b: String,
    pub bandwidth_mbps: T,
    /// One-way latency in milliseconds.
    pub latency_ms: T,
    pub loss: T,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("duplicate link between `{0}` and `{1}`")]
    DuplicateLink(String, String),
    #[error("unknown node id `{0}`")]
    UnknownNode(String),
    #[error("node `{id}`: {msg}")]
    InvalidNode { id: String, msg: String },
    #[error("link `{a}`-`{b}`: {msg}")]
    InvalidLink { a: String, b: String, msg: String },
    #[error("topology is disconnected: `{0}` is unreachable from `{1}`")]
    Disconnected(String, String),
    #[error("topology has no nodes")]
    Empty,
    #[error("`{0}` and `{1}` are not adjacent")]
    NotAdjacent(String, String),
    #[error("path bandwidth is undefined for a node and itself (`{0}`)")]
    SameEndpoints(String),
    #[error("need at least 2 nodes, got {0}")]
    TooFewNodes(usize),
}

/// Validated, immutable mesh graph.
#[derive(Clone, Debug)]
pub struct Topology<T> {
    nodes: Vec<NodeSpec<T>>,
    links: Vec<LinkSpec<T>>,
    index: HashMap<String, NodeIdx>,
    /// Per node: `(neighbour, link index)` sorted by neighbour.
    adj: Vec<Vec<(NodeIdx, usize)>>,
    /// Row-major hop-count matrix.
    hops: Vec<u32>,
}

impl<T: Scalar> Topology<T> {
    /// Validates and freezes a topology. Link endpoints are canonicalised so
    /// that `a < b`, and links are sorted by endpoint pair.
    pub fn new(
        mut nodes: Vec<NodeSpec<T>>,
        mut links: Vec<LinkSpec<T>>,
    ) -> Result<Self, TopologyError> {
        if nodes.is_empty() {
            return Err(TopologyError::Empty);
        }
        nodes.sort_by(|x, y| x.id.cmp(&y.id));
        for w in nodes.windows(2) {
            if w[0].id == w[1].id {
                return Err(TopologyError::DuplicateNode(w[0].id.clone()));
            }
        }
        for n in &nodes {
            validate_node(n)?;
        }
        let index: HashMap<String, NodeIdx> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), NodeIdx(i)))
            .collect();

        for l in links.iter_mut() {
            if l.b < l.a {
                std::mem::swap(&mut l.a, &mut l.b);
            }
        }
        links.sort_by(|x, y| (&x.a, &x.b).cmp(&(&y.a, &y.b)));
        let mut adj = vec![Vec::new(); nodes.len()];
        for (li, l) in links.iter().enumerate() {
            validate_link(l)?;
            let a = *index
                .get(&l.a)
                .ok_or_else(|| TopologyError::UnknownNode(l.a.clone()))?;
            let b = *index
                .get(&l.b)
                .ok_or_else(|| TopologyError::UnknownNode(l.b.clone()))?;
            if li > 0 && links[li - 1].a == l.a && links[li - 1].b == l.b {
                return Err(TopologyError::DuplicateLink(l.a.clone(), l.b.clone()));
            }
            adj[a.0].push((b, li));
            adj[b.0].push((a, li));
        }
        for row in adj.iter_mut() {
            row.sort();
        }

        let n = nodes.len();
        let mut hops = vec![u32::MAX; n * n];
        for src in 0..n {
            bfs(&adj, src, &mut hops[src * n..(src + 1) * n]);
        }
        if let Some(far) = (0..n).find(|&j| hops[j] == u32::MAX) {
            return Err(TopologyError::Disconnected(
                nodes[far].id.clone(),
                nodes[0].id.clone(),
            ));
        }

        Ok(Self {
            nodes,
            links,
            index,
            adj,
            hops,
        })
    }

    pub fn nodes(&self) -> &[NodeSpec<T>] {
        &self.nodes
    }

    pub fn links(&self) -> &[LinkSpec<T>] {
        &self.links
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: NodeIdx) -> &NodeSpec<T> {
        &self.nodes[i.0]
    }

    pub fn id(&self, i: NodeIdx) -> &str {
        &self.nodes[i.0].id
    }

    pub fn node_index(&self, id: &str) -> Result<NodeIdx, TopologyError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| TopologyError::UnknownNode(id.to_string()))
    }

    pub fn indices(&self) -> impl Iterator<Item = NodeIdx> {
        (0..self.nodes.len()).map(NodeIdx)
    }

    pub fn neighbours(&self, i: NodeIdx) -> impl Iterator<Item = NodeIdx> + '_ {
        self.adj[i.0].iter().map(|&(j, _)| j)
    }

    pub fn degree(&self, i: NodeIdx) -> usize {
        self.adj[i.0].len()
    }

    pub fn link_between(&self, a: NodeIdx, b: NodeIdx) -> Option<&LinkSpec<T>> {
        self.adj[a.0]
            .binary_search_by(|&(j, _)| j.cmp(&b))
            .ok()
            .map(|pos| &self.links[self.adj[a.0][pos].1])
    }

    pub fn hop_count(&self, a: NodeIdx, b: NodeIdx) -> u32 {
        self.hops[a.0 * self.nodes.len() + b.0]
    }

    /// Minimum-hop path from `a` to `b`; among equal-hop paths the one whose
    /// node-id sequence is lexicographically smallest.
    pub fn path(&self, a: NodeIdx, b: NodeIdx) -> Vec<NodeIdx> {
        let mut path = Vec::with_capacity(self.hop_count(a, b) as usize + 1);
        let mut cur = a;
        path.push(cur);
        while cur != b {
            let want = self.hop_count(cur, b) - 1;
            // adjacency rows are sorted, so the first hit is the smallest id
            cur = self.adj[cur.0]
                .iter()
                .map(|&(j, _)| j)
                .find(|&j| self.hop_count(j, b) == want)
                .expect("connected topology always has a next hop");
            path.push(cur);
        }
        path
    }

    pub fn shortest_path(&self, a: &str, b: &str) -> Result<Vec<&str>, TopologyError> {
        let (ia, ib) = (self.node_index(a)?, self.node_index(b)?);
        Ok(self.path(ia, ib).into_iter().map(|i| self.id(i)).collect())
    }

    /// Bandwidth of the narrowest link on [`Topology::path`].
    pub fn path_bandwidth_idx(&self, a: NodeIdx, b: NodeIdx) -> Result<T, TopologyError> {
        if a == b {
            return Err(TopologyError::SameEndpoints(self.id(a).to_string()));
        }
        let path = self.path(a, b);
        Ok(path
            .windows(2)
            .map(|w| self.link_between(w[0], w[1]).expect("path edge").bandwidth_mbps)
            .fold(T::infinity(), T::min))
    }

    pub fn path_bandwidth(&self, a: &str, b: &str) -> Result<T, TopologyError> {
        self.path_bandwidth_idx(self.node_index(a)?, self.node_index(b)?)
    }

    /// Store-and-forward delay in milliseconds of a `message_bytes` message
    /// along `path`: per link, latency plus serialisation time.
    pub fn transfer_delay_idx(
        &self,
        path: &[NodeIdx],
        message_bytes: u64,
    ) -> Result<T, TopologyError> {
        let bits = T::of(message_bytes as f64 * 8.0);
        let kbits_per_ms = T::of(1000.0);
        let mut total = T::zero();
        for w in path.windows(2) {
            let link = self.link_between(w[0], w[1]).ok_or_else(|| {
                TopologyError::NotAdjacent(self.id(w[0]).to_string(), self.id(w[1]).to_string())
            })?;
            total = total + link.latency_ms + bits / (link.bandwidth_mbps * kbits_per_ms);
        }
        Ok(total)
    }

    pub fn transfer_delay(&self, path: &[&str], message_bytes: u64) -> Result<T, TopologyError> {
        let idx = path
            .iter()
            .map(|id| self.node_index(id))
            .collect::<Result<Vec<_>, _>>()?;
        self.transfer_delay_idx(&idx, message_bytes)
    }

    /// Delay of a message routed over the shortest path between two nodes.
    pub fn route_delay(&self, a: NodeIdx, b: NodeIdx, message_bytes: u64) -> T {
        self.transfer_delay_idx(&self.path(a, b), message_bytes)
            .expect("shortest path edges are adjacent")
    }
}

fn bfs(adj: &[Vec<(NodeIdx, usize)>], src: usize, dist: &mut [u32]) {
    let mut queue = VecDeque::new();
    dist[src] = 0;
    queue.push_back(src);
    while let Some(u) = queue.pop_front() {
        for &(v, _) in &adj[u] {
            if dist[v.0] == u32::MAX {
                dist[v.0] = dist[u] + 1;
                queue.push_back(v.0);
            }
        }
    }
}

fn validate_node<T: Scalar>(n: &NodeSpec<T>) -> Result<(), TopologyError> {
    let bad = |msg: &str| {
        Err(TopologyError::InvalidNode {
            id: n.id.clone(),
            msg: msg.to_string(),
        })
    };
    if n.id.is_empty() || n.id.chars().any(char::is_whitespace) || n.id.starts_with('#') {
        return bad("id must be a non-empty token without whitespace");
    }
    if !(n.lat.is_finite() && n.lon.is_finite()) {
        return bad("coordinates must be finite");
    }
    if !(n.cpu_capacity > T::zero() && n.cpu_capacity.is_finite()) {
        return bad("cpu capacity must be positive");
    }
    if !(n.availability >= T::zero() && n.availability <= T::one()) {
        return bad("availability must lie in [0, 1]");
    }
    Ok(())
}

fn validate_link<T: Scalar>(l: &LinkSpec<T>) -> Result<(), TopologyError> {
    let bad = |msg: &str| {
        Err(TopologyError::InvalidLink {
            a: l.a.clone(),
            b: l.b.clone(),
            msg: msg.to_string(),
        })
    };
    if l.a == l.b {
        return bad("endpoints must be distinct");
    }
    if !(l.bandwidth_mbps > T::zero() && l.bandwidth_mbps.is_finite()) {
        return bad("bandwidth must be positive");
    }
    if !(l.latency_ms >= T::zero() && l.latency_ms.is_finite()) {
        return bad("latency must be non-negative");
    }
    if !(l.loss >= T::zero() && l.loss < T::one()) {
        return bad("loss must lie in [0, 1)");
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn node(id: &str) -> NodeSpec<f64> {
        NodeSpec {
            id: id.into(),
            lat: 0.0,
            lon: 0.0,
            cpu_capacity: 1.0,
            availability: 1.0,
        }
    }

    pub fn link(a: &str, b: &str, bw: f64, lat: f64) -> LinkSpec<f64> {
        LinkSpec {
            a: a.into(),
            b: b.into(),
            bandwidth_mbps: bw,
            latency_ms: lat,
            loss: 0.0,
        }
    }

    fn triangle(ab: f64, bc: f64, ac: f64) -> Topology<f64> {
        Topology::new(
            vec![node("A"), node("B"), node("C")],
            vec![link("A", "B", ab, 1.0), link("B", "C", bc, 1.0), link("A", "C", ac, 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn path_to_self_is_singleton() {
        let t = triangle(1.0, 1.0, 1.0);
        assert_eq!(t.shortest_path("B", "B").unwrap(), vec!["B"]);
    }

    #[test]
    fn direct_edge_dominates() {
        let t = triangle(10.0, 5.0, 2.0);
        assert_eq!(t.shortest_path("A", "C").unwrap(), vec!["A", "C"]);
        // the 2-hop route offers 5 Mbps but the hop-shortest path wins
        assert_eq!(t.path_bandwidth("A", "C").unwrap(), 2.0);
    }

    #[test]
    fn line_bandwidth_is_min_link() {
        let t = Topology::new(
            vec![node("A"), node("B"), node("C")],
            vec![link("A", "B", 13.6, 1.0), link("B", "C", 10.0, 1.0)],
        )
        .unwrap();
        assert_eq!(t.path_bandwidth("A", "C").unwrap(), 10.0);
        assert_eq!(t.path_bandwidth("A", "B").unwrap(), 13.6);
    }

    #[test]
    fn path_bandwidth_rejects_same_endpoint_and_unknown() {
        let t = triangle(1.0, 1.0, 1.0);
        assert!(matches!(
            t.path_bandwidth("A", "A"),
            Err(TopologyError::SameEndpoints(_))
        ));
        assert!(matches!(
            t.path_bandwidth("A", "Z"),
            Err(TopologyError::UnknownNode(_))
        ));
        assert!(matches!(
            t.shortest_path("Q", "A"),
            Err(TopologyError::UnknownNode(_))
        ));
    }

    #[test]
    fn equal_hop_tie_breaks_on_smallest_ids() {
        // square A-B-D and A-C-D: both 2 hops, B < C
        let t = Topology::new(
            vec![node("A"), node("B"), node("C"), node("D")],
            vec![
                link("A", "C", 1.0, 1.0),
                link("C", "D", 1.0, 1.0),
                link("A", "B", 1.0, 1.0),
                link("B", "D", 1.0, 1.0),
            ],
        )
        .unwrap();
        assert_eq!(t.shortest_path("A", "D").unwrap(), vec!["A", "B", "D"]);
        assert_eq!(t.shortest_path("D", "A").unwrap(), vec!["D", "B", "A"]);
    }

    #[test]
    fn transfer_delay_arithmetic() {
        let t = Topology::new(
            vec![node("A"), node("B"), node("C")],
            vec![link("A", "B", 10.0, 2.0), link("B", "C", 10.0, 2.0)],
        )
        .unwrap();
        assert_eq!(t.transfer_delay(&["A"], 1250).unwrap(), 0.0);
        assert!((t.transfer_delay(&["A", "B"], 1250).unwrap() - 3.0).abs() < 1e-12);
        assert!((t.transfer_delay(&["A", "B", "C"], 1250).unwrap() - 6.0).abs() < 1e-12);
        assert!(matches!(
            t.transfer_delay(&["A", "C"], 10),
            Err(TopologyError::NotAdjacent(..))
        ));
    }

    #[test]
    fn validation_errors() {
        let dup = Topology::new(vec![node("A"), node("A")], vec![]);
        assert_eq!(dup.unwrap_err(), TopologyError::DuplicateNode("A".into()));

        let disc = Topology::<f64>::new(vec![node("A"), node("B")], vec![]);
        assert!(matches!(disc, Err(TopologyError::Disconnected(..))));

        let par = Topology::new(
            vec![node("A"), node("B")],
            vec![link("A", "B", 1.0, 1.0), link("B", "A", 2.0, 1.0)],
        );
        assert!(matches!(par, Err(TopologyError::DuplicateLink(..))));

        let selfl = Topology::new(vec![node("A"), node("B")], vec![link("A", "A", 1.0, 1.0)]);
        assert!(matches!(selfl, Err(TopologyError::InvalidLink { .. })));

        let mut bad = node("B");
        bad.availability = 1.5;
        let r = Topology::new(vec![node("A"), bad], vec![link("A", "B", 1.0, 1.0)]);
        assert!(matches!(r, Err(TopologyError::InvalidNode { .. })));

        let zero_bw = Topology::new(vec![node("A"), node("B")], vec![link("A", "B", 0.0, 1.0)]);
        assert!(matches!(zero_bw, Err(TopologyError::InvalidLink { .. })));
    }

    #[test]
    fn works_in_single_precision() {
        let t = Topology::<f32>::new(
            vec![
                NodeSpec { id: "a".into(), lat: 0.0, lon: 0.0, cpu_capacity: 1.0, availability: 1.0 },
                NodeSpec { id: "b".into(), lat: 0.0, lon: 0.0, cpu_capacity: 1.0, availability: 1.0 },
            ],
            vec![LinkSpec { a: "a".into(), b: "b".into(), bandwidth_mbps: 10.0, latency_ms: 2.0, loss: 0.0 }],
        )
        .unwrap();
        assert_eq!(t.transfer_delay(&["a", "b"], 1250).unwrap(), 3.0f32);
    }
}
