//! Confounding decompositions that keep the observed covariance fixed.

use nomad_ggm::ggm::*;
use nomad_ggm::graph::{same_equivalence_class, UndirectedGraph, VertexSet};
use nomad_ggm::identifiability::*;

/// Edge 1–2, 4-cycle 2–3–4–5, edge 5–6: the block interior {3, 4} misses
/// the chords 2–4 and 3–5.
fn cycle_block_graph() -> UndirectedGraph {
    UndirectedGraph::from_edges(6, &[(1, 2), (2, 3), (3, 4), (4, 5), (5, 2), (5, 6)]).unwrap()
}

#[test]
fn demo_decomposition_is_exact_and_local() {
    for seed in 0..20 {
        let r = demo_report(seed).unwrap();
        assert!(r.decomposition_error < 1e-12, "{}", r.decomposition_error);
        assert!(r.outside_block_deviation < 1e-9, "{}", r.outside_block_deviation);
        assert!(r.h_in_class);
    }
}

#[test]
fn complete_block_keeps_its_pattern() {
    // A triangle is already complete, so moving interior noise cannot add
    // edges; generically no entry cancels either.
    let same = (0..20).filter(|&s| !demo_report(s).unwrap().h_differs).count();
    assert_eq!(same, 20);
}

#[test]
fn sparse_block_fills_in_within_the_class() {
    let g = cycle_block_graph();
    let block = VertexSet::from([2, 3, 4, 5]);
    let mut differs = 0;
    for seed in 0..20 {
        let k = synthesize_precision(&g, WeightRange::default(), seed, &SynthesisOptions::default()).unwrap();
        let sigma = k.covariance().unwrap();
        let mut d = NoiseSpec::zeros(6);
        d.diagonal[2] = 1.0 + seed as f64 * 0.05;
        d.diagonal[3] = 0.7;
        d.diagonal[0] = 0.3;
        let split = split_noise(&sigma, &d, &g, &block).unwrap();
        assert_eq!(split.d1.diagonal, vec![0.0, 0.0, d.diagonal[2], 0.7, 0.0, 0.0]);
        assert_eq!(split.d_q.diagonal[0], 0.3);
        let r = verify_confounder(&split, &g).unwrap();
        assert!(r.decomposition_error < 1e-12);
        assert!(r.outside_block_deviation < 1e-9);
        assert!(r.h_in_class);
        assert!(same_equivalence_class(&g, &r.h).unwrap());
        differs += r.h_differs as usize;
    }
    assert!(differs >= 19, "{differs}");
}

#[test]
fn split_rejects_bad_inputs() {
    let (g, k, d) = demo_model(0).unwrap();
    let sigma = k.covariance().unwrap();
    assert!(split_noise(&sigma, &d, &g, &VertexSet::from([1, 2])).is_err());
    assert!(split_noise(&sigma, &NoiseSpec::zeros(4), &g, &VertexSet::from([2, 3, 4])).is_err());
    let two = split_noise_blocks(&sigma, &d, &g, &[VertexSet::from([2, 3, 4])]).unwrap();
    assert_eq!(two, split_noise(&sigma, &d, &g, &VertexSet::from([2, 3, 4])).unwrap());
}

#[test]
fn sparsity_graph_thresholds() {
    let k = diag(&[1.0, 1.0, 1.0]);
    assert_eq!(sparsity_graph(&k, 1e-9).num_edges(), 0);
    let (g, k, _) = demo_model(3).unwrap();
    assert_eq!(sparsity_graph(&k.entries, SPARSITY_THRESHOLD), g);
}
