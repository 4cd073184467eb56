//! Synthetic mesh generator.
//!
//! Geometric random graph over uniformly placed routers; link bandwidths are
//! log-normal with a long right tail, so most nodes sit behind a slow link
//! while a few links are fast. Components left over by the connection radius
//! are stitched together through their geographically closest node pair.

use rand::{Rng, SeedableRng};
use serde::Deserialize;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};

use super::{LinkSpec, NodeIdx, NodeSpec, Topology, TopologyError};
use crate::scalar::Scalar;

/// Distribution parameters of [`synth_topology`].
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthProfile {
    pub origin_lat: f64,
    pub origin_lon: f64,
    /// Side of the square deployment area, in degrees.
    pub span_deg: f64,
    /// Expected node degree of the geometric graph before stitching.
    pub mean_degree: f64,
    pub bandwidth_mean_mbps: f64,
    /// Shape of the log-normal bandwidth distribution.
    pub bandwidth_sigma: f64,
    pub bandwidth_min_mbps: f64,
    pub bandwidth_max_mbps: f64,
    pub latency_base_ms: f64,
    /// Uniform extra latency in `[0, latency_spread_ms)`.
    pub latency_spread_ms: f64,
    /// Log-normal spread of CPU capacity around the 1.0 reference.
    pub cpu_sigma: f64,
    pub cpu_min: f64,
    pub cpu_max: f64,
    /// Mean of the exponential unavailability `1 - availability`.
    pub unavailability_mean: f64,
    pub availability_min: f64,
}

impl Default for SynthProfile {
    fn default() -> Self {
        Self {
            origin_lat: 41.370,
            origin_lon: 2.125,
            span_deg: 0.02,
            mean_degree: 4.0,
            bandwidth_mean_mbps: 13.6,
            bandwidth_sigma: 0.7,
            bandwidth_min_mbps: 0.5,
            bandwidth_max_mbps: 150.0,
            latency_base_ms: 1.0,
            latency_spread_ms: 2.0,
            cpu_sigma: 0.35,
            cpu_min: 0.4,
            cpu_max: 2.5,
            unavailability_mean: 0.04,
            availability_min: 0.5,
        }
    }
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    (v * s).round() / s
}

/// Generates a connected mesh of `n` nodes. Pure in `(n, seed, profile)`.
pub fn synth_topology<T: Scalar>(
    n: usize,
    seed: u64,
    profile: &SynthProfile,
) -> Result<Topology<T>, TopologyError> {
    if n < 2 {
        return Err(TopologyError::TooFewNodes(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = (n - 1).to_string().len().max(2);

    let sigma = profile.bandwidth_sigma;
    let mu = profile.bandwidth_mean_mbps.ln() - sigma * sigma / 2.0;
    let bw_dist = LogNormal::new(mu, sigma).expect("valid bandwidth distribution");
    let cpu_dist = LogNormal::new(0.0, profile.cpu_sigma).expect("valid cpu distribution");
    let unavail = Exp::new(1.0 / profile.unavailability_mean).expect("valid availability");

    let mut pos = Vec::with_capacity(n);
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let lat = round_to(profile.origin_lat + rng.random::<f64>() * profile.span_deg, 6);
        let lon = round_to(profile.origin_lon + rng.random::<f64>() * profile.span_deg, 6);
        let cpu = round_to(
            cpu_dist.sample(&mut rng).clamp(profile.cpu_min, profile.cpu_max),
            2,
        );
        let avail = round_to(
            (1.0 - unavail.sample(&mut rng)).max(profile.availability_min),
            3,
        );
        pos.push((lat, lon));
        nodes.push(NodeSpec {
            id: format!("n{i:0width$}"),
            lat: T::of(lat),
            lon: T::of(lon),
            cpu_capacity: T::of(cpu),
            availability: T::of(avail),
        });
    }

    let dist2 = |i: usize, j: usize| {
        let (a, b) = (pos[i], pos[j]);
        (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
    };
    let radius = profile.span_deg * (profile.mean_degree / (std::f64::consts::PI * n as f64)).sqrt();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if dist2(i, j) <= radius * radius {
                pairs.push((i, j));
            }
        }
    }

    // stitch components until connected
    let mut comp = UnionFind::new(n);
    for &(i, j) in &pairs {
        comp.union(i, j);
    }
    while comp.count > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            for j in i + 1..n {
                if comp.find(i) != comp.find(j) {
                    let d = dist2(i, j);
                    if best.is_none_or(|(bd, _, _)| d < bd) {
                        best = Some((d, i, j));
                    }
                }
            }
        }
        let (_, i, j) = best.expect("more than one component has a crossing pair");
        comp.union(i, j);
        pairs.push((i, j));
    }
    pairs.sort_unstable();

    // moment-matched: the sample is rescaled to the profile mean
    let raw: Vec<f64> = pairs.iter().map(|_| bw_dist.sample(&mut rng)).collect();
    let scale = profile.bandwidth_mean_mbps * raw.len() as f64 / raw.iter().sum::<f64>();
    let links = pairs
        .into_iter()
        .zip(raw)
        .map(|((i, j), bw)| {
            let bw = round_to(
                (bw * scale).clamp(profile.bandwidth_min_mbps, profile.bandwidth_max_mbps),
                2,
            );
            let lat = round_to(
                profile.latency_base_ms + rng.random::<f64>() * profile.latency_spread_ms,
                3,
            );
            LinkSpec {
                a: nodes[i].id.clone(),
                b: nodes[j].id.clone(),
                bandwidth_mbps: T::of(bw),
                latency_ms: T::of(lat),
                loss: T::zero(),
            }
        })
        .collect();

    Topology::new(nodes, links)
}

/// Best-path bandwidth from every non-gateway node to its best gateway.
///
/// The `gateways` highest-degree nodes (ties to the smaller id) act as
/// gateways; each remaining node reports the maximum over gateways of the
/// path bandwidth.
pub fn gateway_bandwidths<T: Scalar>(t: &Topology<T>, gateways: usize) -> Vec<T> {
    let mut by_degree: Vec<NodeIdx> = t.indices().collect();
    by_degree.sort_by(|a, b| t.degree(*b).cmp(&t.degree(*a)).then(a.cmp(b)));
    let gws = &by_degree[..gateways.min(t.len())];
    t.indices()
        .filter(|i| !gws.contains(i))
        .map(|i| {
            gws.iter()
                .map(|&g| t.path_bandwidth_idx(i, g).expect("distinct nodes"))
                .fold(T::neg_infinity(), T::max)
        })
        .collect()
}

struct UnionFind {
    parent: Vec<usize>,
    count: usize,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            count: n,
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
            self.count -= 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::write_topology;

    #[test]
    fn same_inputs_same_bytes() {
        let p = SynthProfile::default();
        let a: Topology<f64> = synth_topology(85, 1, &p).unwrap();
        let b: Topology<f64> = synth_topology(85, 1, &p).unwrap();
        assert_eq!(write_topology(&a), write_topology(&b));
        let c: Topology<f64> = synth_topology(85, 2, &p).unwrap();
        assert_ne!(write_topology(&a), write_topology(&c));
    }

    #[test]
    fn two_nodes_are_connected() {
        for seed in 0..20 {
            let t: Topology<f64> = synth_topology(2, seed, &SynthProfile::default()).unwrap();
            assert_eq!(t.len(), 2);
            assert_eq!(t.links().len(), 1);
        }
    }

    #[test]
    fn rejects_fewer_than_two() {
        assert_eq!(
            synth_topology::<f64>(1, 0, &SynthProfile::default()).unwrap_err(),
            TopologyError::TooFewNodes(1)
        );
    }

    #[test]
    fn qmpsu_sized_mean_bandwidth() {
        let t: Topology<f64> = synth_topology(85, 1, &SynthProfile::default()).unwrap();
        let mean = t.links().iter().map(|l| l.bandwidth_mbps).sum::<f64>() / t.links().len() as f64;
        assert!((11.6..=15.6).contains(&mean), "mean {mean}");
    }

    #[test]
    fn bandwidth_targets_hold_across_sizes_and_seeds() {
        let p = SynthProfile::default();
        for n in [50, 85, 120] {
            for seed in 0..10 {
                let t: Topology<f64> = synth_topology(n, seed, &p).unwrap();
                let mean =
                    t.links().iter().map(|l| l.bandwidth_mbps).sum::<f64>() / t.links().len() as f64;
                assert!((13.6 * 0.85..=13.6 * 1.15).contains(&mean), "n={n} seed={seed} mean={mean}");
                let gw = gateway_bandwidths(&t, 2);
                let slow = gw.iter().filter(|&&b| b <= 10.0).count() as f64 / gw.len() as f64;
                assert!(slow >= 0.55, "n={n} seed={seed} slow={slow}");
            }
        }
    }
}
