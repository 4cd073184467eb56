use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::PlacementError;
use crate::scalar::{self, Scalar};
use crate::topology::NodeSpec;

pub const MAX_LLOYD_ITERATIONS: usize = 100;

/// Geographic partition of the nodes that passed the availability filter.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterSet<T> {
    /// Indices into the node slice handed to [`kmeans_geo`], ascending per cluster.
    pub clusters: Vec<Vec<usize>>,
    /// `(lat, lon)` centroid per cluster.
    pub centroids: Vec<(T, T)>,
    /// Total within-cluster squared distance after every Lloyd iteration.
    pub inertia_history: Vec<T>,
}

impl<T: Scalar> ClusterSet<T> {
    pub fn inertia(&self) -> T {
        self.inertia_history.last().copied().unwrap_or_else(T::zero)
    }
}

fn dist2<T: Scalar>(a: (T, T), b: (T, T)) -> T {
    let (dy, dx) = (a.0 - b.0, a.1 - b.1);
    dy * dy + dx * dx
}

/// Naive k-means over planar `(lat, lon)` degrees.
///
/// Nodes below `availability_threshold` are dropped first. Seeding is
/// farthest-point starting from the smallest id; `seed` only breaks exact
/// distance ties during seeding.
pub fn kmeans_geo<T: Scalar>(
    nodes: &[NodeSpec<T>],
    k: usize,
    availability_threshold: T,
    seed: u64,
) -> Result<ClusterSet<T>, PlacementError> {
    if k == 0 {
        return Err(PlacementError::ZeroK);
    }
    let survivors: Vec<usize> = (0..nodes.len())
        .filter(|&i| nodes[i].availability >= availability_threshold)
        .collect();
    if survivors.len() < k {
        return Err(PlacementError::TooFewNodes {
            need: k,
            have: survivors.len(),
        });
    }
    let pos: Vec<(T, T)> = survivors.iter().map(|&i| (nodes[i].lat, nodes[i].lon)).collect();
    let m = survivors.len();

    // farthest-point seeding
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = (0..m)
        .min_by(|&a, &b| nodes[survivors[a]].id.cmp(&nodes[survivors[b]].id))
        .expect("at least one survivor");
    let mut chosen = vec![first];
    let mut nearest: Vec<T> = pos.iter().map(|&p| dist2(p, pos[first])).collect();
    while chosen.len() < k {
        let far = (0..m)
            .filter(|i| !chosen.contains(i))
            .map(|i| nearest[i])
            .fold(T::neg_infinity(), T::max);
        let ties: Vec<usize> = (0..m)
            .filter(|i| !chosen.contains(i) && nearest[*i] == far)
            .collect();
        let pick = ties[if ties.len() > 1 { rng.random_range(0..ties.len()) } else { 0 }];
        chosen.push(pick);
        for i in 0..m {
            nearest[i] = nearest[i].min(dist2(pos[i], pos[pick]));
        }
    }
    let mut centroids: Vec<(T, T)> = chosen.iter().map(|&i| pos[i]).collect();

    let mut assign = vec![usize::MAX; m];
    let mut history = Vec::new();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut next: Vec<usize> = pos
            .iter()
            .map(|&p| {
                (0..k)
                    .min_by(|&a, &b| scalar::cmp(dist2(p, centroids[a]), dist2(p, centroids[b])).then(a.cmp(&b)))
                    .expect("k >= 1")
            })
            .collect();
        refill_empty(&mut next, &pos, &centroids, k);
        let stable = next == assign;
        assign = next;
        centroids = (0..k)
            .map(|c| {
                let members: Vec<(T, T)> = (0..m).filter(|&i| assign[i] == c).map(|i| pos[i]).collect();
                let n = T::of(members.len() as f64);
                let (sy, sx) = members
                    .iter()
                    .fold((T::zero(), T::zero()), |(y, x), p| (y + p.0, x + p.1));
                (sy / n, sx / n)
            })
            .collect();
        history.push(
            (0..m)
                .map(|i| dist2(pos[i], centroids[assign[i]]))
                .fold(T::zero(), |a, b| a + b),
        );
        if stable {
            break;
        }
    }

    let clusters = (0..k)
        .map(|c| (0..m).filter(|&i| assign[i] == c).map(|i| survivors[i]).collect())
        .collect();
    Ok(ClusterSet {
        clusters,
        centroids,
        inertia_history: history,
    })
}

/// Gives every empty cluster the point farthest from its own centroid, taken
/// from a cluster that can spare one. Only reachable with coincident points.
fn refill_empty<T: Scalar>(assign: &mut [usize], pos: &[(T, T)], centroids: &[(T, T)], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assign.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = (0..k).find(|&c| sizes[c] == 0) else {
            return;
        };
        let donor = (0..assign.len())
            .filter(|&i| sizes[assign[i]] > 1)
            .max_by(|&a, &b| {
                scalar::cmp(dist2(pos[a], centroids[assign[a]]), dist2(pos[b], centroids[assign[b]]))
                    .then(b.cmp(&a))
            })
            .expect("m >= k guarantees a donor");
        assign[donor] = empty;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(id: &str, lat: f64, lon: f64, avail: f64) -> NodeSpec<f64> {
        NodeSpec {
            id: id.into(),
            lat,
            lon,
            cpu_capacity: 1.0,
            availability: avail,
        }
    }

    fn blobs() -> Vec<NodeSpec<f64>> {
        let mut v = Vec::new();
        let offs = [(0.0, 0.0), (0.001, 0.0), (0.0, 0.002), (0.002, 0.001), (0.001, 0.001)];
        for (i, (dy, dx)) in offs.iter().enumerate() {
            v.push(at(&format!("a{i}"), 41.37 + dy, 2.12 + dx, 1.0));
            v.push(at(&format!("b{i}"), 41.39 + dx, 2.15 + dy, 1.0));
        }
        v
    }

    fn sse(nodes: &[NodeSpec<f64>], group: &[usize]) -> f64 {
        let n = group.len() as f64;
        let cy = group.iter().map(|&i| nodes[i].lat).sum::<f64>() / n;
        let cx = group.iter().map(|&i| nodes[i].lon).sum::<f64>() / n;
        group
            .iter()
            .map(|&i| (nodes[i].lat - cy).powi(2) + (nodes[i].lon - cx).powi(2))
            .sum()
    }

    #[test]
    fn two_blobs_match_exhaustive_partition() {
        let nodes = blobs();
        // oracle: every 2-partition of 10 points
        let mut best = (f64::INFINITY, 0u32);
        for mask in 1u32..(1 << 10) - 1 {
            let a: Vec<usize> = (0..10).filter(|i| mask & (1 << i) != 0).collect();
            let b: Vec<usize> = (0..10).filter(|i| mask & (1 << i) == 0).collect();
            let cost = sse(&nodes, &a) + sse(&nodes, &b);
            if cost < best.0 {
                best = (cost, mask);
            }
        }
        let oracle_a: Vec<usize> = (0..10).filter(|i| best.1 & (1 << i) != 0).collect();
        let oracle_b: Vec<usize> = (0..10).filter(|i| best.1 & (1 << i) == 0).collect();

        let cs = kmeans_geo(&nodes, 2, 0.0, 3).unwrap();
        let mut got = cs.clusters.clone();
        got.sort();
        let mut want = vec![oracle_a, oracle_b];
        want.sort();
        assert_eq!(got, want);
        assert!((cs.inertia() - best.0).abs() < 1e-15);
    }

    #[test]
    fn k_one_and_k_all() {
        let nodes = blobs();
        let one = kmeans_geo(&nodes, 1, 0.0, 0).unwrap();
        assert_eq!(one.clusters, vec![(0..10).collect::<Vec<_>>()]);
        let all = kmeans_geo(&nodes, 10, 0.0, 0).unwrap();
        assert!(all.clusters.iter().all(|c| c.len() == 1));
    }

    #[test]
    fn availability_filter_and_errors() {
        let mut nodes = blobs();
        nodes[0].availability = 0.5;
        nodes[3].availability = 0.9;
        let cs = kmeans_geo(&nodes, 2, 0.95, 0).unwrap();
        let members: Vec<usize> = cs.clusters.concat();
        assert_eq!(members.len(), 8);
        assert!(!members.contains(&0) && !members.contains(&3));

        assert!(matches!(
            kmeans_geo(&nodes, 9, 0.95, 0),
            Err(PlacementError::TooFewNodes { need: 9, have: 8 })
        ));
        assert_eq!(kmeans_geo(&nodes, 0, 0.95, 0).unwrap_err(), PlacementError::ZeroK);
    }

    #[test]
    fn coincident_points_still_give_k_clusters() {
        let nodes: Vec<_> = (0..4).map(|i| at(&format!("n{i}"), 1.0, 1.0, 1.0)).collect();
        let cs = kmeans_geo(&nodes, 4, 0.0, 9).unwrap();
        assert!(cs.clusters.iter().all(|c| c.len() == 1));
    }

    #[test]
    fn deterministic_for_seed() {
        let nodes = blobs();
        assert_eq!(kmeans_geo(&nodes, 3, 0.0, 5).unwrap(), kmeans_geo(&nodes, 3, 0.0, 5).unwrap());
    }
}
