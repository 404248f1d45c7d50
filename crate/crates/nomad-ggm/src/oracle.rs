//! Brute-force reference implementations used to check the efficient
//! machinery. Everything here is exponential and refuses inputs above an
//! explicit budget instead of truncating silently.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{NomadError, Result};
use crate::ggm::{DistanceMatrix, GgmModel, NoiseSpec, PrecisionMatrix};
use crate::graph::{copy_of, joint_graph, UndirectedGraph, Vertex, VertexSet};

/// Size limits for the exhaustive searches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleBudget {
    /// Largest model graph (not counting joint-graph copies).
    pub max_vertices: usize,
    /// Largest number of simple paths enumerated between one vertex pair.
    pub max_paths: usize,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget {
            max_vertices: 12,
            max_paths: 200_000,
        }
    }
}

impl OracleBudget {
    fn check(&self, p: usize) -> Result<()> {
        if p > self.max_vertices {
            Err(NomadError::BudgetExceeded {
                size: p,
                limit: self.max_vertices,
            })
        } else {
            Ok(())
        }
    }
}

/// Dense bit index of every vertex (at most 64 vertices).
struct BitIndex {
    order: Vec<Vertex>,
}

impl BitIndex {
    fn new(g: &UndirectedGraph) -> Self {
        BitIndex { order: g.vertices().collect() }
    }

    fn bit(&self, v: Vertex) -> u64 {
        1u64 << self.order.binary_search(&v).expect("vertex present")
    }

    fn mask(&self, vs: impl IntoIterator<Item = Vertex>) -> u64 {
        vs.into_iter().fold(0, |m, v| m | self.bit(v))
    }
}

/// Interior-vertex masks of every simple path from `a` to `b`.
fn path_interiors(g: &UndirectedGraph, idx: &BitIndex, a: Vertex, b: Vertex, budget: &OracleBudget) -> Result<Vec<u64>> {
    fn dfs(
        g: &UndirectedGraph,
        idx: &BitIndex,
        u: Vertex,
        b: Vertex,
        visited: u64,
        interior: u64,
        out: &mut Vec<u64>,
        limit: usize,
    ) -> bool {
        for w in g.neighbors(u) {
            if w == b {
                out.push(interior);
                if out.len() > limit {
                    return false;
                }
                continue;
            }
            let bw = idx.bit(w);
            if visited & bw == 0 && !dfs(g, idx, w, b, visited | bw, interior | bw, out, limit) {
                return false;
            }
        }
        true
    }
    let mut out = Vec::new();
    if a == b {
        return Ok(vec![0]);
    }
    if !dfs(g, idx, a, b, idx.bit(a), 0, &mut out, budget.max_paths) {
        return Err(NomadError::BudgetExceeded {
            size: out.len(),
            limit: budget.max_paths,
        });
    }
    Ok(out)
}

fn check_graph_size(g: &UndirectedGraph) -> Result<()> {
    if g.num_vertices() > 64 {
        return Err(NomadError::BudgetExceeded {
            size: g.num_vertices(),
            limit: 64,
        });
    }
    Ok(())
}

/// Separation by enumerating every simple path from `a` to `b`.
pub fn oracle_is_separator(g: &UndirectedGraph, s: &VertexSet, a: &VertexSet, b: &VertexSet, budget: &OracleBudget) -> Result<bool> {
    budget.check(g.num_vertices())?;
    check_graph_size(g)?;
    let idx = BitIndex::new(g);
    let sm = idx.mask(s.iter().copied());
    for &x in a {
        for &y in b {
            for path in path_interiors(g, &idx, x, y, budget)? {
                if path & sm == 0 {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Cut vertices by removing each vertex and testing connectivity.
pub fn oracle_cut_vertices(g: &UndirectedGraph) -> VertexSet {
    g.vertices()
        .filter(|&v| {
            let rest: VertexSet = g.vertices().filter(|&w| w != v).collect();
            rest.len() > 1 && !g.induced(&rest).is_connected()
        })
        .collect()
}

fn is_biconnected_subset(g: &UndirectedGraph, s: &VertexSet) -> bool {
    let h = g.induced(s);
    match s.len() {
        0 | 1 => false,
        2 => h.num_edges() == 1,
        _ => h.is_connected() && oracle_cut_vertices(&h).is_empty(),
    }
}

/// Blocks by exhaustive search over vertex subsets: the inclusion-maximal
/// subsets inducing a biconnected subgraph (an edge counts as biconnected).
pub fn oracle_blocks(g: &UndirectedGraph, budget: &OracleBudget) -> Result<Vec<VertexSet>> {
    budget.check(g.num_vertices())?;
    let vs: Vec<Vertex> = g.vertices().collect();
    let n = vs.len();
    if n == 1 {
        return Ok(vec![VertexSet::from([vs[0]])]);
    }
    let mut good: Vec<VertexSet> = Vec::new();
    for mask in 1u64..(1u64 << n) {
        let s: VertexSet = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| vs[i]).collect();
        if is_biconnected_subset(g, &s) {
            good.push(s);
        }
    }
    let mut maximal: Vec<VertexSet> = good
        .iter()
        .filter(|s| !good.iter().any(|t| t.len() > s.len() && s.is_subset(t)))
        .cloned()
        .collect();
    maximal.sort();
    Ok(maximal)
}

/// Minimum-cardinality mutual separators of a triple by path enumeration,
/// using the same candidate family as the efficient implementation: subsets
/// of the non-members, or a single member on every path between the other two.
pub fn oracle_mutual_separators(g: &UndirectedGraph, u: [Vertex; 3], budget: &OracleBudget) -> Result<Vec<VertexSet>> {
    check_graph_size(g)?;
    if u[0] == u[1] || u[0] == u[2] || u[1] == u[2] {
        return Err(NomadError::NonDistinctTriple);
    }
    let idx = BitIndex::new(g);
    let pairs = [(u[0], u[1]), (u[0], u[2]), (u[1], u[2])];
    let mut paths = Vec::new();
    for &(a, b) in &pairs {
        paths.push(path_interiors(g, &idx, a, b, budget)?);
    }
    let hits_all = |ps: &Vec<u64>, m: u64| ps.iter().all(|&p| p & m != 0);
    let interior: Vec<Vertex> = g.vertices().filter(|v| !u.contains(v)).collect();
    let n = interior.len();
    // Member separators have size one even when no other vertex exists.
    for k in 0..=n.max(1) {
        let mut found: BTreeSet<VertexSet> = BTreeSet::new();
        // Enumerate k-subsets through bitmasks with exactly k bits.
        for mask in 0u64..(1u64 << n) {
            if mask.count_ones() as usize != k || k > n {
                continue;
            }
            let set: VertexSet = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| interior[i]).collect();
            let m = idx.mask(set.iter().copied());
            if paths.iter().all(|ps| hits_all(ps, m)) {
                found.insert(set);
            }
        }
        if k == 1 {
            for (j, &x) in u.iter().enumerate() {
                // Pair of the other two members.
                let other = 2 - j;
                if hits_all(&paths[other], idx.bit(x)) {
                    found.insert(VertexSet::from([x]));
                }
            }
        }
        if !found.is_empty() {
            return Ok(found.into_iter().collect());
        }
    }
    Ok(Vec::new())
}

/// Ancestor of a triple when its minimum mutual separator is unique and a
/// single vertex.
pub fn oracle_star_ancestor(g: &UndirectedGraph, u: [Vertex; 3], budget: &OracleBudget) -> Result<Option<Vertex>> {
    let seps = oracle_mutual_separators(g, u, budget)?;
    Ok(match seps.as_slice() {
        [only] if only.len() == 1 => only.iter().next().copied(),
        _ => None,
    })
}

/// All star triplets of `g`.
pub fn oracle_star_triplets(g: &UndirectedGraph, budget: &OracleBudget) -> Result<BTreeSet<[Vertex; 3]>> {
    budget.check(g.num_vertices())?;
    let vs: Vec<Vertex> = g.vertices().collect();
    let mut out = BTreeSet::new();
    for a in 0..vs.len() {
        for b in a + 1..vs.len() {
            for c in b + 1..vs.len() {
                let t = [vs[a], vs[b], vs[c]];
                if oracle_star_ancestor(g, t, budget)?.is_some() {
                    out.insert(t);
                }
            }
        }
    }
    Ok(out)
}

/// Star ancestor of the triple of noisy copies of `u` in the joint graph.
pub fn oracle_joint_ancestor(g: &UndirectedGraph, u: [Vertex; 3], budget: &OracleBudget) -> Result<Option<Vertex>> {
    let p = g.require_dense_labels()?;
    budget.check(p)?;
    let gj = joint_graph(g)?;
    oracle_star_ancestor(&gj, u.map(|v| copy_of(v, p)), budget)
}

/// Reference answer of the TIA test on observed triples `u`, `w` (model
/// vertex ids): both copy triples are star triplets of the joint graph with
/// the same ancestor.
pub fn oracle_tia(g: &UndirectedGraph, u: [Vertex; 3], w: [Vertex; 3], budget: &OracleBudget) -> Result<bool> {
    let au = oracle_joint_ancestor(g, u, budget)?;
    let aw = oracle_joint_ancestor(g, w, budget)?;
    Ok(au.is_some() && au == aw)
}

/// Population distance between two cut vertices in the joint model.
pub fn oracle_hidden_distance(g: &UndirectedGraph, k: &PrecisionMatrix, d: &NoiseSpec, p_label: Vertex, q_label: Vertex) -> Result<f64> {
    let cuts = oracle_cut_vertices(g);
    for v in [p_label, q_label] {
        if !cuts.contains(&v) {
            return Err(NomadError::InvalidParameter(format!("{v} is not a cut vertex")));
        }
    }
    let model = GgmModel::new(g.clone(), k.clone(), d.clone())?;
    let joint: DistanceMatrix = model.joint_distances();
    Ok(joint.get(p_label as i64, q_label as i64))
}
