//! Independent oracles shared by the integration tests. Nothing here calls
//! the routing, replay or settlement code it is used to check.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use meshchain::topology::{LinkSpec, NodeSpec, Topology};
use rand::Rng;

pub fn workspace_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

/// A connected graph of `n` nodes: a random spanning tree plus random extra
/// edges. Bandwidths are small integers so ties are common.
pub fn random_connected<R: Rng>(rng: &mut R, n: usize) -> Topology<f64> {
    let nodes: Vec<NodeSpec<f64>> = (0..n)
        .map(|i| NodeSpec {
            id: format!("v{i}"),
            lat: 41.0 + rng.random::<f64>() * 0.01,
            lon: 2.0 + rng.random::<f64>() * 0.01,
            cpu_capacity: 1.0,
            availability: 1.0,
        })
        .collect();
    let mut edges = std::collections::BTreeSet::new();
    for i in 1..n {
        let p = rng.random_range(0..i);
        edges.insert((p, i));
    }
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(0.3) {
                edges.insert((a, b));
            }
        }
    }
    let links = edges
        .into_iter()
        .map(|(a, b)| LinkSpec {
            a: format!("v{a}"),
            b: format!("v{b}"),
            bandwidth_mbps: rng.random_range(1..=6) as f64,
            latency_ms: 1.0,
            loss: 0.0,
        })
        .collect();
    Topology::new(nodes, links).expect("spanning tree keeps it connected")
}

/// Enumerates every simple path from `a` to `b` and returns the one with
/// fewest hops, ties broken by the lexicographically smallest id sequence,
/// together with the narrowest link bandwidth on it.
pub fn exhaustive_route(t: &Topology<f64>, a: &str, b: &str) -> (Vec<String>, f64) {
    let mut adj: BTreeMap<&str, Vec<(&str, f64)>> = BTreeMap::new();
    for l in t.links() {
        adj.entry(&l.a).or_default().push((&l.b, l.bandwidth_mbps));
        adj.entry(&l.b).or_default().push((&l.a, l.bandwidth_mbps));
    }
    let mut all: Vec<(Vec<String>, f64)> = Vec::new();
    let mut stack = vec![a.to_string()];
    fn dfs<'a>(
        adj: &BTreeMap<&'a str, Vec<(&'a str, f64)>>,
        target: &str,
        stack: &mut Vec<String>,
        narrowest: f64,
        all: &mut Vec<(Vec<String>, f64)>,
    ) {
        let here = stack.last().unwrap().clone();
        if here == target {
            all.push((stack.clone(), narrowest));
            return;
        }
        for &(next, bw) in adj.get(here.as_str()).map(Vec::as_slice).unwrap_or(&[]) {
            if stack.iter().any(|s| s == next) {
                continue;
            }
            stack.push(next.to_string());
            dfs(adj, target, stack, narrowest.min(bw), all);
            stack.pop();
        }
    }
    dfs(&adj, b, &mut stack, f64::INFINITY, &mut all);
    all.sort_by(|x, y| x.0.len().cmp(&y.0.len()).then_with(|| x.0.cmp(&y.0)));
    all.into_iter().next().expect("graph is connected")
}

/// Balances after applying `(from, to, value)` transfers in order.
pub fn naive_balances(genesis: &BTreeMap<String, u64>, transfers: &[(String, String, u64)]) -> BTreeMap<String, u64> {
    let mut b = genesis.clone();
    for (from, to, v) in transfers {
        *b.get_mut(from).unwrap() -= v;
        *b.get_mut(to).unwrap() += v;
    }
    b
}
