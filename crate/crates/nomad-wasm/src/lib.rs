//! Browser bindings: three JSON-in, JSON-out operations for the static demo
//! page in `www/`.
//!
//! - [`graph_ast`]: block structure and articulated set tree of a graph;
//! - [`recover`]: synthesize a noisy model on a graph, run the recovery on
//!   its population distances and compare with the truth;
//! - [`confounder_demo`]: the five-vertex confounding decomposition.
//!
//! The `*_json` functions are plain Rust so they can be tested natively;
//! the exported wrappers only convert errors for JavaScript.

use nomad_ggm::experiments::generate_graph;
use nomad_ggm::ggm::{synthesize_model, SynthesisOptions, WeightRange};
use nomad_ggm::graph::{distance_ambiguous_triangles, equivalence_signature};
use nomad_ggm::identifiability::demo_report;
use nomad_ggm::io::parse_graph;
use nomad_ggm::{block_decomposition, build_ast, run_nomad, same_equivalence_class, Result, Tolerances, UndirectedGraph};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// A graph given either as `{"p": .., "edges": ..}` JSON or as a generator
/// id such as `gsyn_standin` or `chain:6`.
pub fn resolve_graph(spec: &str, seed: u64) -> Result<UndirectedGraph> {
    let trimmed = spec.trim();
    if trimmed.starts_with('{') {
        parse_graph(trimmed)
    } else {
        generate_graph(trimmed, seed)
    }
}

/// Blocks, cut vertices, equivalence signature and AST of a graph.
pub fn graph_ast_json(spec: &str, seed: u64) -> Result<String> {
    let g = resolve_graph(spec, seed)?;
    let bd = block_decomposition(&g)?;
    let out = json!({
        "graph": g,
        "nontrivial_blocks": bd.nontrivial_blocks,
        "cut_vertices": bd.cut_vertices,
        "signature": equivalence_signature(&g)?,
        "ambiguous_triangles": distance_ambiguous_triangles(&g)?,
        "ast": build_ast(&g)?,
    });
    Ok(serde_json::to_string(&out)?)
}

/// Synthesizes a model with noise uniform on `[0, noise_max]`, recovers the
/// structure from population distances and reports whether the result lies
/// in the true equivalence class.
pub fn recover_json(spec: &str, noise_max: f64, seed: u64) -> Result<String> {
    let g = resolve_graph(spec, seed)?;
    let (model, margins) = synthesize_model(&g, WeightRange::default(), noise_max, seed, &SynthesisOptions::default())?;
    let out = run_nomad(&model.observed_distances(), &Tolerances::population())?;
    let report = json!({
        "truth": build_ast(&g)?,
        "recovered": out.ast,
        "recovered_graph": out.graph,
        "same_class": same_equivalence_class(&g, &out.ast)?,
        "margins": margins,
        "noise": model.noise.diagonal,
        "hidden_ancestors": out.catalog.a_hid.len(),
        "observed_ancestors": out.catalog.a_obs,
        "warnings": out.diagnostics.warnings,
    });
    Ok(serde_json::to_string(&report)?)
}

/// The five-vertex confounding decomposition for one seed.
pub fn confounder_demo_json(seed: u64) -> Result<String> {
    let r = demo_report(seed)?;
    let out = json!({
        "decomposition_error": r.decomposition_error,
        "outside_block_deviation": r.outside_block_deviation,
        "h": r.h,
        "h_in_class": r.h_in_class,
        "h_differs": r.h_differs,
    });
    Ok(serde_json::to_string(&out)?)
}

fn js<T>(r: Result<T>) -> std::result::Result<T, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

/// See [`graph_ast_json`].
#[wasm_bindgen]
pub fn graph_ast(spec: &str, seed: u32) -> std::result::Result<String, JsError> {
    js(graph_ast_json(spec, seed.into()))
}

/// See [`recover_json`].
#[wasm_bindgen]
pub fn recover(spec: &str, noise_max: f64, seed: u32) -> std::result::Result<String, JsError> {
    js(recover_json(spec, noise_max, seed.into()))
}

/// See [`confounder_demo_json`].
#[wasm_bindgen]
pub fn confounder_demo(seed: u32) -> std::result::Result<String, JsError> {
    js(confounder_demo_json(seed.into()))
}
