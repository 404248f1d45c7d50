//! Model synthesis, distances, sampling and margins.

use nalgebra::DMatrix;
use nomad_ggm::experiments::{chain, gsyn_standin, random_block, random_connected};
use nomad_ggm::ggm::*;
use nomad_ggm::graph::{joint_graph, TripleClass, TripleClassifier};
use nomad_ggm::nomad::{tia_score, triples, TripleTable};
use nomad_ggm::{NomadError, UndirectedGraph};

fn accepted(g: &UndirectedGraph, noise: f64, seed: u64) -> (GgmModel, ModelMargins) {
    synthesize_model(g, WeightRange::default(), noise, seed, &SynthesisOptions::default()).unwrap()
}

#[test]
fn synthesis_is_deterministic_and_has_exact_support() {
    let g = gsyn_standin();
    let (a, ma) = accepted(&g, 2.0, 11);
    let (b, mb) = accepted(&g, 2.0, 11);
    assert_eq!(a, b);
    assert_eq!(ma, mb);
    let k = &a.precision.entries;
    for i in 0..10 {
        let off: f64 = (0..10).filter(|&j| j != i).map(|j| k[(i, j)].abs()).sum();
        assert!((k[(i, i)] - off - 0.1).abs() < 1e-12);
        for j in 0..10 {
            if i != j {
                let edge = g.has_edge(i + 1, j + 1);
                assert_eq!(k[(i, j)] != 0.0, edge);
                if edge {
                    assert!((0.2..=0.5).contains(&k[(i, j)].abs()));
                }
            }
        }
    }
    assert!(a.noise.diagonal.iter().all(|&d| (0.0..=2.0).contains(&d)));
    let (c, _) = accepted(&g, 2.0, 12);
    assert_ne!(a, c);
}

#[test]
fn joint_distances_match_block_covariance() {
    // The joint vector (x, x + e) has covariance [[Σ, Σ], [Σ, Σ + D]].
    for seed in 0..5 {
        let g = random_connected(6, 0.3, seed);
        let (m, _) = accepted(&g, 3.0, seed);
        let p = 6;
        let s = &m.sigma;
        let big = DMatrix::from_fn(2 * p, 2 * p, |i, j| {
            let v = s[(i % p, j % p)];
            if i == j && i >= p {
                v + m.noise.diagonal[i - p]
            } else {
                v
            }
        });
        let expected = DMatrix::from_fn(2 * p, 2 * p, |i, j| {
            if i == j {
                0.0
            } else {
                -(big[(i, j)] / (big[(i, i)] * big[(j, j)]).sqrt()).abs().ln()
            }
        });
        let joint = m.joint_distances();
        assert!((joint.values.clone() - expected).abs().max() < 1e-12);
        let obs = m.observed_distances();
        let copies: Vec<i64> = (p as i64 + 1..=2 * p as i64).collect();
        assert!((joint.restrict(&copies).values - obs.values).abs().max() < 1e-12);
    }
}

#[test]
fn additivity_holds_exactly_across_separators() {
    for seed in 0..6 {
        let g = random_block(8, 1 + seed as usize % 2, seed).unwrap();
        let (m, margins) = accepted(&g, 5.0, seed);
        let rep = additivity_report(&g, &m.joint_distances()).unwrap();
        assert!(rep.max_separated_error < 1e-9, "{rep:?}");
        assert!(rep.min_nonseparated_gap >= margins.gamma);
        assert!(margins.gamma >= 0.01);
        assert!(rep.separated_triples > 0 && rep.nonseparated_triples > 0);
    }
}

#[test]
fn zeta_is_the_smallest_unforced_tia_score() {
    // Brute force over every ordered pair with distinct classes.
    for seed in 0..4 {
        let g = random_block(7, 1, seed).unwrap();
        let (m, margins) = accepted(&g, 4.0, seed);
        let obs = m.observed_distances();
        let ts = triples(7);
        let cls = TripleClassifier::new(&g).unwrap();
        let class: Vec<TripleClass> = ts.iter().map(|t| cls.classify(t.map(|i| i + 1))).collect();
        let table = TripleTable::new(&obs.values, ts.clone());
        let mut best = f64::INFINITY;
        for a in 0..ts.len() {
            for b in 0..ts.len() {
                if a != b && class[a] != class[b] {
                    best = best.min(tia_score(&table, a, b));
                }
                if a != b && class[a] == class[b] {
                    assert!(tia_score(&table, a, b) < 1e-9);
                }
            }
        }
        assert!((best - margins.zeta).abs() < 1e-12);
        assert!(margins.zeta >= 0.01);
    }
}

#[test]
fn margin_floors_reject_and_report() {
    let opts = SynthesisOptions {
        gamma_floor: 50.0,
        max_attempts: 3,
        ..SynthesisOptions::default()
    };
    let err = synthesize_model(&chain(4), WeightRange::default(), 1.0, 1, &opts).unwrap_err();
    assert!(matches!(err, NomadError::MarginRejected { attempts: 3, margin: "gamma", .. }));
    let bad = WeightRange { lo: -1.0, hi: 0.5 };
    assert!(synthesize_model(&chain(4), bad, 1.0, 1, &SynthesisOptions::default()).is_err());
    assert!(synthesize_model(&chain(4), WeightRange::default(), -1.0, 1, &SynthesisOptions::default()).is_err());
}

#[test]
fn sampling_is_deterministic_and_consistent() {
    let g = chain(5);
    let (m, _) = accepted(&g, 1.0, 3);
    let so = m.observed_covariance();
    let a = sample(&so, 2000, 9).unwrap();
    assert_eq!(a, sample(&so, 2000, 9).unwrap());
    assert_ne!(a, sample(&so, 2000, 10).unwrap());
    let big = sample(&so, 200_000, 4).unwrap();
    let est = empirical_distances(&big).unwrap();
    let truth = m.observed_distances();
    assert!((est.values - truth.values).abs().max() < 0.05);
}

#[test]
fn numerical_guards() {
    let not_pd = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    assert!(matches!(invert_spd(&not_pd), Err(NomadError::NotPositiveDefinite)));
    assert!(information_distances(&not_pd).is_err());
    let zero_col = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 0.0, 3.0, 0.0]);
    assert!(matches!(empirical_covariance(&zero_col), Err(NomadError::ZeroVariance(1))));
    let neg = NoiseSpec {
        diagonal: vec![0.1, -0.2],
    };
    assert!(neg.validate().is_err());
    assert_eq!(correlation_distance(1.0), 0.0);
    assert!(correlation_distance(0.0).is_finite());
    let spd = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let inv = invert_spd(&spd).unwrap();
    assert!((spd * inv - DMatrix::identity(2, 2)).abs().max() < 1e-12);
}

#[test]
fn sample_bound_behaviour() {
    let base = sample_bound(0.5, 0.1, 10, 0.05, 1.0).unwrap();
    assert!(sample_bound(0.5, 0.05, 10, 0.05, 1.0).unwrap() > base);
    assert!(sample_bound(0.5, 0.1, 100, 0.05, 1.0).unwrap() > base);
    assert!(sample_bound(0.5, 0.1, 10, 0.01, 1.0).unwrap() > base);
    assert!(sample_bound(0.0, 0.1, 10, 0.05, 1.0).is_err());
    assert!(sample_bound(1.0, 5.0, 10, 0.05, 1.0).is_err());
}

#[test]
fn joint_graph_shape() {
    let g = chain(4);
    let gj = joint_graph(&g).unwrap();
    assert_eq!(gj.num_vertices(), 8);
    assert_eq!(gj.num_edges(), 3 + 4);
    for v in 1..=4 {
        assert!(gj.has_edge(v, v + 4));
        assert_eq!(gj.degree(v + 4), 1);
    }
}
