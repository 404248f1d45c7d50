//! Randomized properties: graph decompositions against the oracles and the
//! invariants of the ε-mode.

use nomad_ggm::experiments::random_connected;
use nomad_ggm::graph::*;
use nomad_ggm::nomad::eps_mode_with_support;
use nomad_ggm::oracle::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decomposition_matches_oracle(p in 2usize..9, extra in 0.0f64..0.6, seed in any::<u64>()) {
        let g = random_connected(p, extra, seed);
        let bd = block_decomposition(&g).unwrap();
        let mut blocks = bd.blocks.clone();
        blocks.sort();
        prop_assert_eq!(blocks, oracle_blocks(&g, &OracleBudget::default()).unwrap());
        prop_assert_eq!(bd.cut_vertices, oracle_cut_vertices(&g));
    }

    #[test]
    fn mode_is_a_member_with_a_tight_group(
        values in prop::collection::vec(-50.0f64..50.0, 1..40),
        eps in 0.0f64..5.0,
    ) {
        let m = eps_mode_with_support(&values, eps).unwrap();
        prop_assert!(values.contains(&m.value));
        prop_assert!(m.support >= 1 && m.support <= values.len());
        // The winning group starts at the mode and fits in the window.
        let in_window = values.iter().filter(|&&x| x >= m.value && (x - m.value < eps || x == m.value)).count();
        prop_assert!(in_window >= m.support);
        // Order does not matter.
        let mut rev = values.clone();
        rev.reverse();
        prop_assert_eq!(eps_mode_with_support(&rev, eps).unwrap(), m);
    }

    #[test]
    fn mode_finds_a_dominant_cluster(
        centre in -10.0f64..10.0,
        offsets in prop::collection::vec(0.0f64..0.09, 6..12),
        outliers in prop::collection::vec(20.0f64..100.0, 0..5),
    ) {
        let mut values: Vec<f64> = offsets.iter().map(|o| centre + o).collect();
        let k = values.len();
        values.extend(outliers.iter().enumerate().map(|(i, o)| o + 10.0 * i as f64));
        let m = eps_mode_with_support(&values, 0.1).unwrap();
        prop_assert_eq!(m.support, k);
        prop_assert!((m.value - centre).abs() < 0.1);
    }
}
