use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{PlacementError, PlacementMethod, PlacementPlan, Role};
use crate::scalar::Scalar;
use crate::topology::{NodeIdx, Topology};

/// `k` distinct nodes drawn uniformly without replacement; roles round-robin in
/// draw order. Availability is ignored.
pub fn random_placement<T: Scalar>(
    t: &Topology<T>,
    roles: &[Role],
    k: usize,
    seed: u64,
) -> Result<PlacementPlan, PlacementError> {
    if k == 0 {
        return Err(PlacementError::ZeroK);
    }
    if k > t.len() {
        return Err(PlacementError::TooFewNodes {
            need: k,
            have: t.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sites: Vec<String> = rand::seq::index::sample(&mut rng, t.len(), k)
        .into_iter()
        .map(|i| t.id(NodeIdx(i)).to_string())
        .collect();
    PlacementPlan::round_robin(roles, &sites, PlacementMethod::Random)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{synth_topology, SynthProfile};

    fn ten() -> Topology<f64> {
        synth_topology(10, 4, &SynthProfile::default()).unwrap()
    }

    #[test]
    fn k_equal_n_is_a_permutation() {
        let t = ten();
        let plan = random_placement(&t, &[Role::Client], 10, 1).unwrap();
        let mut sites: Vec<&str> = plan.sites();
        assert_eq!(sites.len(), 1);
        // with k = n every node is drawn exactly once
        let roles: Vec<Role> = (1..=10).map(Role::Sealer).collect();
        let plan = random_placement(&t, &roles, 10, 1).unwrap();
        sites = plan.sites();
        sites.sort();
        let mut all: Vec<&str> = t.nodes().iter().map(|n| n.id.as_str()).collect();
        all.sort();
        assert_eq!(sites, all);
    }

    #[test]
    fn seeded() {
        let t = ten();
        let roles = crate::placement::poa_roles(3);
        assert_eq!(random_placement(&t, &roles, 4, 8).unwrap(), random_placement(&t, &roles, 4, 8).unwrap());
        assert!(matches!(
            random_placement(&t, &roles, 11, 8),
            Err(PlacementError::TooFewNodes { need: 11, have: 10 })
        ));
    }

    #[test]
    fn single_pick_is_uniform() {
        let t = ten();
        let mut counts = [0usize; 10];
        let trials = 10_000;
        for seed in 0..trials {
            let plan = random_placement(&t, &[Role::Client], 1, seed as u64).unwrap();
            counts[t.node_index(plan.node_of(Role::Client).unwrap()).unwrap().0] += 1;
        }
        for c in counts {
            let f = c as f64 / trials as f64;
            assert!((f - 0.1).abs() <= 0.01, "frequency {f}");
        }
        // chi-square with 9 degrees of freedom, 0.999 quantile = 27.88
        let expected = trials as f64 / 10.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 27.88, "chi2 {chi2}");
    }
}
