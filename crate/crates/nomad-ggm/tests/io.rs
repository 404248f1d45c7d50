//! File formats round-trip and reject malformed input.

use nalgebra::DMatrix;
use nomad_ggm::experiments::{gsyn_standin, showcase};
use nomad_ggm::ggm::{sample, synthesize_model, SynthesisOptions, WeightRange};
use nomad_ggm::io::*;
use nomad_ggm::{build_ast, NomadError};

#[test]
fn graph_and_ast_round_trip() {
    let g = showcase();
    let text = to_json(&g).unwrap();
    assert!(text.contains("\"edges\""));
    assert_eq!(parse_graph(&text).unwrap(), g);
    let t = build_ast(&g).unwrap();
    assert_eq!(parse_ast(&to_json(&t).unwrap()).unwrap(), t);
}

#[test]
fn malformed_graphs_and_trees_are_rejected() {
    assert!(parse_graph(r#"{"p": 2, "edges": [[1, 3]]}"#).is_err());
    assert!(parse_graph(r#"{"p": 2, "edges": [[1, 1]]}"#).is_err());
    assert!(parse_graph("not json").is_err());
    let bad = r#"{"parts": [[1], [2]], "edges": [[0, 1], [1, 0]], "articulation": []}"#;
    assert!(parse_ast(bad).is_err());
}

#[test]
fn distances_round_trip() {
    let (m, _) = synthesize_model(&gsyn_standin(), WeightRange::default(), 1.0, 3, &SynthesisOptions::default()).unwrap();
    let d = m.observed_distances();
    assert_eq!(parse_distances(&to_json(&d).unwrap()).unwrap(), d);
    assert!(parse_distances(r#"{"labels": [1, 2], "values": [[0.0]]}"#).is_err());
}

#[test]
fn data_csv_round_trip() {
    let (m, _) = synthesize_model(&gsyn_standin(), WeightRange::default(), 1.0, 3, &SynthesisOptions::default()).unwrap();
    let data = sample(&m.observed_covariance(), 50, 1).unwrap();
    let text = data_csv(&data).unwrap();
    assert!(text.starts_with("1,2,3,4,5,6,7,8,9,10\n"));
    assert_eq!(parse_data_csv(&text).unwrap(), data);
    assert!(matches!(parse_data_csv("1,3\n0.5,0.5\n"), Err(NomadError::NonDenseLabels(2))));
    assert!(parse_data_csv("1,2\n0.5\n").is_err());
    assert!(parse_data_csv("1,2\n0.5,x\n").is_err());
}

#[test]
fn matrices_and_adjacency() {
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(parse_square_matrix(&matrix_json(&m).unwrap()).unwrap(), m);
    assert!(parse_square_matrix("[[1, 2]]").is_err());
    assert!(rows_to_matrix(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    let g = parse_adjacency("[[0, 1, 0], [1, 0, 0.3], [0, 0.3, 0]]").unwrap();
    assert_eq!(g.edges(), vec![(1, 2), (2, 3)]);
}
