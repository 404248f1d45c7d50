//! Recovery pipeline: primitives, stage contracts and end-to-end recovery on
//! population distances.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use nomad_ggm::experiments::{chain, chain_triangle, gsyn_standin, random_block, random_connected, star};
use nomad_ggm::ggm::*;
use nomad_ggm::graph::*;
use nomad_ggm::identifiability::sparsity_graph;
use nomad_ggm::nomad::*;
use nomad_ggm::oracle::{oracle_tia, OracleBudget};

fn accepted(g: &UndirectedGraph, noise: f64, seed: u64) -> GgmModel {
    synthesize_model(g, WeightRange::default(), noise, seed, &SynthesisOptions::default())
        .unwrap()
        .0
}

fn labelled(v: [usize; 3]) -> [i64; 3] {
    v.map(|x| x as i64)
}

/// Graphs whose equivalence class is determined by their distances: every
/// triangle block has only cut vertices.
fn clean_corpus() -> Vec<UndirectedGraph> {
    let mut out = vec![chain(6), star(6), gsyn_standin()];
    for s in 0..60 {
        let g = if s % 2 == 0 {
            random_connected(5 + (s as usize % 5), 0.25, s)
        } else {
            random_block(9, 1 + (s as usize % 3), s).unwrap()
        };
        if distance_ambiguous_triangles(&g).unwrap().is_empty() {
            out.push(g);
        }
    }
    out
}

#[test]
fn eps_mode_examples() {
    assert_eq!(eps_mode(&[5., 5., 5., 5., 2., 2., 9., 9., 1.], 0.1).unwrap(), 5.0);
    assert_eq!(eps_mode(&[3.5; 6], 0.1).unwrap(), 3.5);
    // Tie between {1, 1} and {4, 4}: the smaller representative wins.
    assert_eq!(eps_mode(&[4., 1., 4., 1.], 0.1).unwrap(), 1.0);
    let r = eps_mode_with_support(&[1.0, 1.05, 1.3, 2.0], 0.1).unwrap();
    assert_eq!((r.value, r.support), (1.0, 2));
    assert!(eps_mode(&[], 0.1).is_err());
}

#[test]
fn triplet_distance_examples() {
    let m = accepted(&star(4), 0.0, 1);
    let d = m.observed_distances();
    let centre = triplet_distance(2, [2, 3, 4], &d).unwrap();
    assert!((centre - d.get(2, 1)).abs() < 1e-12);
    assert!(triplet_distance(2, [2, 2, 4], &d).is_err());
    assert!(triplet_distance(1, [2, 3, 4], &d).is_err());
}

#[test]
fn tia_decides_the_triple_class() {
    // The test passes exactly for pairs with the same star ancestor or the
    // same block gates; it agrees with the ancestor oracle everywhere except
    // on same-gate pairs.
    let budget = OracleBudget::default();
    let tol = Tolerances::population();
    for s in 0..40 {
        let p = 4 + (s as usize % 4);
        let g = random_connected(p, 0.3, s);
        let m = accepted(&g, 3.0, s);
        let d = m.observed_distances();
        let cls = TripleClassifier::new(&g).unwrap();
        let ts: Vec<[usize; 3]> = triples(p).into_iter().map(|t| t.map(|i| i + 1)).collect();
        for &u in &ts {
            for &w in &ts {
                if u == w {
                    continue;
                }
                let got = tia(labelled(u), labelled(w), &d, &tol).unwrap();
                let (cu, cw) = (cls.classify(u), cls.classify(w));
                assert_eq!(got, cu == cw, "{g:?} {u:?} {w:?}");
                let oracle = oracle_tia(&g, u, w, &budget).unwrap();
                if !matches!(cu, TripleClass::Gates(_)) || cu != cw {
                    assert_eq!(got, oracle, "{g:?} {u:?} {w:?}");
                }
            }
        }
    }
}

#[test]
fn ancestor_counts_and_extended_distances() {
    let tol = Tolerances::population();
    for g in clean_corpus().into_iter().take(20) {
        let p = g.num_vertices();
        let m = accepted(&g, 4.0, 5);
        let d = m.observed_distances();
        let stage = identify_ancestors(&d, &tol).unwrap();
        let cuts = block_decomposition(&g).unwrap().cut_vertices;
        assert_eq!(stage.catalog.a_obs.len() + stage.catalog.a_hid.len(), cuts.len(), "{g:?}");
        assert_eq!(stage.catalog.a_hid.len(), stage.catalog.hid_collections.len());
        let labels: Vec<i64> = (1..=p as i64).collect();
        assert_eq!(stage.extended.restrict(&labels).values, d.values);
        // Each hidden label stands for a cut vertex; its distances are the
        // joint-model distances of the original vertex.
        let cls = TripleClassifier::new(&g).unwrap();
        let joint = m.joint_distances();
        let original = |label: i64| -> i64 {
            let hc = stage.catalog.hid_collections.iter().find(|h| h.label == label).unwrap();
            match cls.classify(hc.triples[0].map(|x| x as usize)) {
                TripleClass::Star(r) => r as i64,
                other => panic!("hidden collection of class {other:?}"),
            }
        };
        for &h in &stage.catalog.a_hid {
            let r = original(h);
            for j in 1..=p as i64 {
                assert!((stage.extended.get(h, j) - joint.get(r, j + p as i64)).abs() < 1e-9);
            }
        }
        for md in &stage.diagnostics.modes {
            let (r, s) = (original(md.p), original(md.q));
            assert!((md.value - joint.get(r, s)).abs() < 1e-9);
            assert!(md.support >= 4);
        }
    }
}

#[test]
fn path_with_noisy_interior_has_hidden_ancestors() {
    let m = accepted(&chain(5), 2.0, 8);
    let stage = identify_ancestors(&m.observed_distances(), &Tolerances::population()).unwrap();
    assert!(stage.catalog.a_obs.is_empty());
    assert_eq!(stage.catalog.a_hid.len(), 3);
}

#[test]
fn biconnected_graph_has_no_ancestors() {
    let g = UndirectedGraph::from_edges(5, &[(1, 2), (2, 3), (3, 4), (4, 5), (5, 1), (1, 3)]).unwrap();
    let m = accepted(&g, 1.0, 2);
    let out = run_nomad(&m.observed_distances(), &Tolerances::population()).unwrap();
    assert!(out.catalog.ancestors().is_empty());
    assert!(same_equivalence_class(&g, &out.ast).unwrap());
}

#[test]
fn in_block_meeting_points_are_discarded() {
    let g = gsyn_standin();
    let m = accepted(&g, 3.0, 1);
    let stage = identify_ancestors(&m.observed_distances(), &Tolerances::population()).unwrap();
    assert!(stage
        .diagnostics
        .warnings
        .iter()
        .any(|w| w.starts_with("discarded a collection")));
    assert_eq!(stage.catalog.ancestors().len(), 4);
}

#[test]
fn non_cut_test_on_tree_leaves() {
    let g = star(5);
    let m = accepted(&g, 1.0, 4);
    let d = m.observed_distances();
    let l = LeafCluster {
        l1: 1,
        l2: BTreeSet::from([2, 3]),
        l3: None,
    };
    let res = non_cut_test(&l, &d, &[1, 2, 3, 4, 5], &Tolerances::population()).unwrap();
    assert!(res.c_noncut.is_empty());
    assert_eq!(res.c_cut, BTreeSet::from([2, 3]));
    let lone = LeafCluster {
        l1: 1,
        l2: BTreeSet::from([2]),
        l3: None,
    };
    assert!(non_cut_test(&lone, &d, &[1, 2, 3, 4, 5], &Tolerances::population()).is_err());
}

#[test]
fn population_recovery_on_identifiable_graphs() {
    let tol = Tolerances::population();
    for (i, g) in clean_corpus().into_iter().enumerate() {
        for noise in [0.0, 5.0] {
            let m = accepted(&g, noise, i as u64);
            let out = run_nomad(&m.observed_distances(), &tol).unwrap();
            out.ast.validate().unwrap();
            assert!(same_equivalence_class(&g, &out.ast).unwrap(), "{g:?} noise {noise}");
            assert_eq!(
                block_decomposition(&out.graph).unwrap().noncut_union(),
                block_decomposition(&g).unwrap().noncut_union()
            );
        }
    }
}

#[test]
fn small_inputs_and_bad_labels() {
    let tol = Tolerances::population();
    let m = accepted(&chain(2), 1.0, 0);
    let out = run_nomad(&m.observed_distances(), &tol).unwrap();
    assert_eq!(out.graph.num_edges(), 1);
    let mut d = accepted(&chain(4), 1.0, 0).observed_distances();
    d.labels[0] = 0;
    assert!(run_nomad(&d, &tol).is_err());
    assert!(Tolerances::from_xi(-1.0, None).validate().is_err());
}

/// Edge lengths of the joint tree that reproduce observed distances on the
/// path `order` (noiseless originals inside, noisy copies hanging off).
fn fit_path_tree(order: &[usize], d: &DistanceMatrix) -> (Vec<f64>, Vec<f64>, f64) {
    let p = order.len();
    let pos: Vec<usize> = (1..=p).map(|v| order.iter().position(|&x| x == v).unwrap()).collect();
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 1..=p {
        for j in i + 1..=p {
            let mut row = vec![0.0; 2 * p - 1];
            row[i - 1] = 1.0;
            row[j - 1] = 1.0;
            let (a, b) = (pos[i - 1].min(pos[j - 1]), pos[i - 1].max(pos[j - 1]));
            for e in a..b {
                row[p + e] = 1.0;
            }
            rows.push(row);
            rhs.push(d.get(i as i64, j as i64));
        }
    }
    let a = DMatrix::from_fn(rows.len(), 2 * p - 1, |r, c| rows[r][c]);
    let b = DVector::from_vec(rhs);
    let x = a.clone().svd(true, true).solve(&b, 1e-12).unwrap();
    let residual = (&a * &x - &b).abs().max();
    (x.rows(0, p).iter().copied().collect(), x.rows(p, p - 1).iter().copied().collect(), residual)
}

#[test]
fn triangle_with_non_cut_corner_is_metrically_a_path() {
    // Observed distances of a noisy model on the chain with a triangle are
    // reproduced exactly by a noisy model on a path through the triangle's
    // non-cut corner, so no distance-based method can tell the two apart.
    let tri = chain_triangle();
    let order = [1, 2, 3, 4, 9, 5, 6, 7, 8];
    let path_edges: Vec<(usize, usize)> = order.windows(2).map(|w| (w[0], w[1])).collect();
    let path = UndirectedGraph::from_edges(9, &path_edges).unwrap();
    assert!(!same_equivalence_class(&tri, &path).unwrap());
    let mut realised = 0;
    for seed in 0..20 {
        let m = accepted(&tri, 3.0, seed);
        let d = m.observed_distances();
        let (noise_len, edge_len, residual) = fit_path_tree(&order, &d);
        assert!(residual < 1e-9, "observed distances are a tree metric on the path");
        if noise_len.iter().chain(&edge_len).any(|&l| l < -1e-12) {
            continue;
        }
        realised += 1;
        // Unit-variance path model with correlations exp(-length) and noise
        // exp(2a) - 1 on each vertex.
        let prefix: Vec<f64> = std::iter::once(0.0)
            .chain(edge_len.iter().scan(0.0, |acc, &l| {
                *acc += l;
                Some(*acc)
            }))
            .collect();
        let at = |v: usize| prefix[order.iter().position(|&x| x == v).unwrap()];
        let sigma = DMatrix::from_fn(9, 9, |i, j| (-(at(i + 1) - at(j + 1)).abs()).exp());
        let noise = NoiseSpec {
            diagonal: noise_len.iter().map(|&a| (2.0 * a).exp() - 1.0).collect(),
        };
        let k = invert_spd(&sigma).unwrap();
        assert_eq!(sparsity_graph(&k, 1e-9), path);
        let d_path = information_distances(&noisy_covariance(&sigma, &noise).unwrap()).unwrap();
        assert!((d_path.values - d.values).abs().max() < 1e-9);
    }
    assert!(realised > 0, "some triangle model must be realisable as a path model");
}
