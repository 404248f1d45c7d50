//! The demo operations, exercised natively.

use nomad_wasm::{confounder_demo_json, graph_ast_json, recover_json, resolve_graph};
use serde_json::Value;

fn parse(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

#[test]
fn graph_ast_reports_blocks_and_tree() {
    let v = parse(&graph_ast_json("gsyn_standin", 0).unwrap());
    assert_eq!(v["nontrivial_blocks"], serde_json::json!([[4, 5, 6, 7]]));
    assert_eq!(v["cut_vertices"], serde_json::json!([2, 4, 7, 9]));
    assert!(v["ast"]["parts"].as_array().unwrap().len() > 1);
    let inline = r#"{"p": 4, "edges": [[1, 2], [2, 3], [3, 1], [3, 4]]}"#;
    let v = parse(&graph_ast_json(inline, 0).unwrap());
    assert_eq!(v["ambiguous_triangles"], serde_json::json!([[1, 2, 3]]));
}

#[test]
fn recover_finds_the_class() {
    let v = parse(&recover_json("gsyn_standin", 3.0, 5).unwrap());
    assert_eq!(v["same_class"], Value::Bool(true));
    assert_eq!(v["noise"].as_array().unwrap().len(), 10);
    let again = recover_json("gsyn_standin", 3.0, 5).unwrap();
    assert_eq!(parse(&again), v);
}

#[test]
fn confounder_demo_is_exact() {
    let v = parse(&confounder_demo_json(1).unwrap());
    assert!(v["decomposition_error"].as_f64().unwrap() < 1e-12);
    assert_eq!(v["h_in_class"], Value::Bool(true));
}

#[test]
fn bad_inputs_are_errors() {
    assert!(resolve_graph("no_such_graph", 0).is_err());
    assert!(graph_ast_json("{\"p\": 2, \"edges\": [[1, 5]]}", 0).is_err());
    assert!(recover_json("chain:4", -1.0, 0).is_err());
}
