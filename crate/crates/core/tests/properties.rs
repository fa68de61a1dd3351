mod common;

use phalanx::metrics::reordering;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{brute_force_inversions, random_scenario, random_trace, simulate, violations};

proptest! {
    #![proptest_config(ProptestConfig { cases: 40, ..ProptestConfig::default() })]

    #[test]
    fn invariants_hold_on_random_clusters(seed in any::<u64>()) {
        let scenario = random_scenario(seed);
        let sim = simulate(&scenario);
        for (property, found) in violations(&sim) {
            prop_assert!(found.is_empty(), "property {property} on seed {seed}: {found:?}");
        }
    }

    #[test]
    fn reordering_matches_pairwise_count(seed in any::<u64>(), k in 0usize..200, proposers in 1u16..5) {
        let trace = random_trace(&mut ChaCha8Rng::seed_from_u64(seed), k, proposers);
        let r = reordering(&trace);
        prop_assert_eq!((r.inverted, r.pairs), brute_force_inversions(&trace));
    }
}

#[test]
fn fixed_seed_sample_is_clean() {
    for seed in 0..30 {
        let sim = simulate(&random_scenario(seed));
        let v = violations(&sim);
        assert!(v.values().all(Vec::is_empty), "seed {seed}: {v:?}");
    }
}
