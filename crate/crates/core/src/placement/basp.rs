//! Bandwidth and availability-aware service placement.
//!
//! 1. geographic k-means over the nodes that meet the availability threshold;
//! 2. per node, the mean path bandwidth to the rest of its cluster, keeping the
//!    candidates within [`BASP_RETENTION_BAND`] of the cluster best;
//! 3. among candidates, the node with the largest `availability * cpu`.

use super::{kmeans_geo, PlacementError, PlacementMethod, PlacementPlan, Role};
use crate::scalar::{self, Scalar};
use crate::topology::{NodeIdx, Topology};

/// Fraction of the best cluster bandwidth score a node needs to stay a candidate.
pub const BASP_RETENTION_BAND: f64 = 0.9;

/// The node chosen for one cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct BaspSite<T> {
    pub node: NodeIdx,
    pub cluster: usize,
    /// Mean path bandwidth to the other cluster members (infinite for singletons).
    pub bandwidth_score: T,
    /// `availability * cpu_capacity`.
    pub hardware_score: T,
}

/// One site per cluster, ordered by hardware score (best first, ties to the
/// smaller id).
pub fn basp_sites<T: Scalar>(
    t: &Topology<T>,
    k: usize,
    availability_threshold: T,
    seed: u64,
) -> Result<Vec<BaspSite<T>>, PlacementError> {
    let clusters = kmeans_geo(t.nodes(), k, availability_threshold, seed)?;
    let band = T::of(BASP_RETENTION_BAND);
    let mut sites = Vec::with_capacity(k);
    for (ci, members) in clusters.clusters.iter().enumerate() {
        let members: Vec<NodeIdx> = members.iter().map(|&i| NodeIdx(i)).collect();
        let scores: Vec<T> = members
            .iter()
            .map(|&a| {
                if members.len() == 1 {
                    return T::infinity();
                }
                let total = members
                    .iter()
                    .filter(|&&b| b != a)
                    .map(|&b| t.path_bandwidth_idx(a, b).expect("distinct members"))
                    .fold(T::zero(), |x, y| x + y);
                total / T::of((members.len() - 1) as f64)
            })
            .collect();
        let best = scores.iter().copied().fold(T::neg_infinity(), T::max);
        let cutoff = if best.is_infinite() { best } else { best * band };

        let hw = |i: NodeIdx| t.node(i).availability * t.node(i).cpu_capacity;
        let (pick, score) = members
            .iter()
            .zip(&scores)
            .filter(|(_, &s)| s >= cutoff)
            .min_by(|(a, _), (b, _)| scalar::cmp(hw(**b), hw(**a)).then(a.cmp(b)))
            .map(|(&i, &s)| (i, s))
            .expect("the cluster best is always a candidate");
        sites.push(BaspSite {
            node: pick,
            cluster: ci,
            bandwidth_score: score,
            hardware_score: hw(pick),
        });
    }
    sites.sort_by(|a, b| scalar::cmp(b.hardware_score, a.hardware_score).then(a.node.cmp(&b.node)));
    Ok(sites)
}

/// BASP placement of `roles`, round-robin over the selected sites.
pub fn basp<T: Scalar>(
    t: &Topology<T>,
    roles: &[Role],
    k: usize,
    availability_threshold: T,
    seed: u64,
) -> Result<PlacementPlan, PlacementError> {
    let sites: Vec<String> = basp_sites(t, k, availability_threshold, seed)?
        .into_iter()
        .map(|s| t.id(s.node).to_string())
        .collect();
    PlacementPlan::round_robin(roles, &sites, PlacementMethod::Basp)
}
