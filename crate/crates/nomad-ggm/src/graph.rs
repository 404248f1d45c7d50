//! Exact graph machinery: undirected graphs, blocks and cut vertices,
//! articulated set trees, vertex separators, joint graphs, and the
//! leaf-swap / block-rewiring equivalence relation.
//!
//! Vertex ids are dense positive integers `1..=p`. In a joint graph the noisy
//! copy of vertex `i` carries id `i + p`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{NomadError, Result};

/// Vertex identifier.
pub type Vertex = usize;
/// Ordered vertex set; iteration order is ascending id, which makes every
/// enumeration in the crate lexicographic and deterministic.
pub type VertexSet = BTreeSet<Vertex>;

/// Largest graph (in vertices) accepted by the exhaustive separator and
/// remote-set enumerations: a 12-vertex model together with its 12 copies.
pub const EXHAUSTIVE_VERTEX_LIMIT: usize = 24;
/// Largest number of leaves accepted by [`remote_leaf_sets`].
pub const REMOTE_LEAF_LIMIT: usize = 20;

/// Simple undirected graph without self-loops.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "GraphJson", try_from = "GraphJson")]
pub struct UndirectedGraph {
    adj: BTreeMap<Vertex, VertexSet>,
}

/// Wire format `{"p": int, "edges": [[u,v], ...]}` with vertex ids `1..=p`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphJson {
    pub p: usize,
    pub edges: Vec<[Vertex; 2]>,
}

impl From<UndirectedGraph> for GraphJson {
    fn from(g: UndirectedGraph) -> Self {
        GraphJson {
            p: g.max_vertex().unwrap_or(0),
            edges: g.edges().into_iter().map(|(u, v)| [u, v]).collect(),
        }
    }
}

impl TryFrom<GraphJson> for UndirectedGraph {
    type Error = NomadError;
    fn try_from(j: GraphJson) -> Result<Self> {
        let edges: Vec<(Vertex, Vertex)> = j.edges.iter().map(|e| (e[0], e[1])).collect();
        UndirectedGraph::from_edges(j.p, &edges)
    }
}

impl UndirectedGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Edgeless graph on the given vertices.
    pub fn with_vertices<I: IntoIterator<Item = Vertex>>(vertices: I) -> Self {
        let mut g = Self::new();
        for v in vertices {
            g.add_vertex(v);
        }
        g
    }

    /// Graph on vertices `1..=p` with the given edges.
    pub fn from_edges(p: usize, edges: &[(Vertex, Vertex)]) -> Result<Self> {
        let mut g = Self::with_vertices(1..=p);
        for &(u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    pub fn add_vertex(&mut self, v: Vertex) {
        self.adj.entry(v).or_default();
    }

    /// Adds `{u, v}`; both endpoints must already be vertices.
    pub fn add_edge(&mut self, u: Vertex, v: Vertex) -> Result<()> {
        if u == v {
            return Err(NomadError::SelfLoop(u));
        }
        for w in [u, v] {
            if !self.adj.contains_key(&w) {
                return Err(NomadError::UnknownVertex(w));
            }
        }
        self.adj.get_mut(&u).expect("checked").insert(v);
        self.adj.get_mut(&v).expect("checked").insert(u);
        Ok(())
    }

    pub fn remove_edge(&mut self, u: Vertex, v: Vertex) -> bool {
        let removed = self.adj.get_mut(&u).is_some_and(|n| n.remove(&v));
        if removed {
            self.adj.get_mut(&v).expect("symmetric").remove(&u);
        }
        removed
    }

    pub fn has_vertex(&self, v: Vertex) -> bool {
        self.adj.contains_key(&v)
    }

    pub fn has_edge(&self, u: Vertex, v: Vertex) -> bool {
        self.adj.get(&u).is_some_and(|n| n.contains(&v))
    }

    /// Neighbours of `v` (empty for unknown vertices).
    pub fn neighbors(&self, v: Vertex) -> impl Iterator<Item = Vertex> + '_ {
        self.adj.get(&v).into_iter().flatten().copied()
    }

    pub fn neighbor_set(&self, v: Vertex) -> VertexSet {
        self.neighbors(v).collect()
    }

    pub fn degree(&self, v: Vertex) -> usize {
        self.adj.get(&v).map_or(0, |n| n.len())
    }

    pub fn vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        self.adj.keys().copied()
    }

    pub fn vertex_set(&self) -> VertexSet {
        self.vertices().collect()
    }

    pub fn max_vertex(&self) -> Option<Vertex> {
        self.adj.keys().next_back().copied()
    }

    /// Edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(Vertex, Vertex)> {
        self.adj
            .iter()
            .flat_map(|(&u, n)| n.range(u + 1..).map(move |&v| (u, v)))
            .collect()
    }

    pub fn num_vertices(&self) -> usize {
        self.adj.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adj.values().map(|n| n.len()).sum::<usize>() / 2
    }

    /// Degree-1 vertices.
    pub fn leaves(&self) -> VertexSet {
        self.vertices().filter(|&v| self.degree(v) == 1).collect()
    }

    /// True when the vertex ids are exactly `1..=p`.
    pub fn has_dense_labels(&self) -> bool {
        self.vertices().eq(1..=self.num_vertices())
    }

    pub fn require_dense_labels(&self) -> Result<usize> {
        if self.has_dense_labels() {
            Ok(self.num_vertices())
        } else {
            Err(NomadError::NonDenseLabels(self.num_vertices()))
        }
    }

    /// Connected with at least one vertex.
    pub fn is_connected(&self) -> bool {
        match self.vertices().next() {
            None => false,
            Some(s) => self.reachable_avoiding(s, &VertexSet::new()).len() == self.num_vertices(),
        }
    }

    pub fn require_connected(&self) -> Result<()> {
        if self.is_connected() {
            Ok(())
        } else {
            Err(NomadError::Disconnected)
        }
    }

    /// Vertices reachable from `start` without entering `blocked`.
    pub fn reachable_avoiding(&self, start: Vertex, blocked: &VertexSet) -> VertexSet {
        let mut seen = VertexSet::new();
        if blocked.contains(&start) || !self.has_vertex(start) {
            return seen;
        }
        let mut queue = VecDeque::from([start]);
        seen.insert(start);
        while let Some(u) = queue.pop_front() {
            for w in self.neighbors(u) {
                if !blocked.contains(&w) && seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    /// Component index of every vertex of `g - removed`.
    pub fn components_without(&self, removed: &VertexSet) -> BTreeMap<Vertex, usize> {
        let mut comp = BTreeMap::new();
        let mut next = 0;
        for v in self.vertices() {
            if removed.contains(&v) || comp.contains_key(&v) {
                continue;
            }
            for w in self.reachable_avoiding(v, removed) {
                comp.insert(w, next);
            }
            next += 1;
        }
        comp
    }

    /// Image of the graph under a vertex relabelling.
    pub fn relabel(&self, f: impl Fn(Vertex) -> Vertex) -> Self {
        let mut h = Self::with_vertices(self.vertices().map(&f));
        for (u, v) in self.edges() {
            h.add_edge(f(u), f(v)).expect("relabelling must be injective");
        }
        h
    }

    /// Subgraph induced by `keep`.
    pub fn induced(&self, keep: &VertexSet) -> Self {
        let mut h = Self::with_vertices(keep.iter().copied().filter(|&v| self.has_vertex(v)));
        for (u, v) in self.edges() {
            if keep.contains(&u) && keep.contains(&v) {
                h.add_edge(u, v).expect("endpoints present");
            }
        }
        h
    }
}

// ---------------------------------------------------------------------------
// Blocks and cut vertices
// ---------------------------------------------------------------------------

/// Maximal biconnected components and cut vertices of a connected graph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockDecomposition {
    /// Vertex sets of all blocks, sorted lexicographically.
    pub blocks: Vec<VertexSet>,
    pub cut_vertices: VertexSet,
    /// Blocks with more than two vertices.
    pub nontrivial_blocks: Vec<VertexSet>,
}

impl BlockDecomposition {
    /// Non-cut vertices that lie in some non-trivial block.
    pub fn noncut_union(&self) -> VertexSet {
        self.nontrivial_blocks
            .iter()
            .flatten()
            .copied()
            .filter(|v| !self.cut_vertices.contains(v))
            .collect()
    }

    /// Two-vertex blocks, i.e. bridges, as ordered pairs.
    pub fn bridges(&self) -> Vec<(Vertex, Vertex)> {
        self.blocks
            .iter()
            .filter(|b| b.len() == 2)
            .map(|b| {
                let mut it = b.iter();
                (*it.next().unwrap(), *it.next().unwrap())
            })
            .collect()
    }
}

struct TarjanState<'a> {
    g: &'a UndirectedGraph,
    disc: BTreeMap<Vertex, usize>,
    low: BTreeMap<Vertex, usize>,
    time: usize,
    edge_stack: Vec<(Vertex, Vertex)>,
    blocks: Vec<VertexSet>,
    cuts: VertexSet,
}

impl TarjanState<'_> {
    fn dfs(&mut self, u: Vertex, parent: Option<Vertex>) {
        self.time += 1;
        self.disc.insert(u, self.time);
        self.low.insert(u, self.time);
        let mut children = 0;
        let neighbors: Vec<Vertex> = self.g.neighbors(u).collect();
        for w in neighbors {
            if Some(w) == parent {
                continue;
            }
            match self.disc.get(&w).copied() {
                None => {
                    children += 1;
                    self.edge_stack.push((u, w));
                    self.dfs(w, Some(u));
                    let lw = self.low[&w];
                    if lw < self.low[&u] {
                        self.low.insert(u, lw);
                    }
                    if lw >= self.disc[&u] {
                        if parent.is_some() {
                            self.cuts.insert(u);
                        }
                        let mut block = VertexSet::new();
                        while let Some((a, b)) = self.edge_stack.pop() {
                            block.insert(a);
                            block.insert(b);
                            if (a, b) == (u, w) {
                                break;
                            }
                        }
                        self.blocks.push(block);
                    }
                }
                Some(dw) => {
                    if dw < self.disc[&u] {
                        self.edge_stack.push((u, w));
                        if dw < self.low[&u] {
                            self.low.insert(u, dw);
                        }
                    }
                }
            }
        }
        if parent.is_none() && children > 1 {
            self.cuts.insert(u);
        }
    }
}

/// Blocks (maximal biconnected components) and cut vertices.
pub fn block_decomposition(g: &UndirectedGraph) -> Result<BlockDecomposition> {
    g.require_connected()?;
    let mut st = TarjanState {
        g,
        disc: BTreeMap::new(),
        low: BTreeMap::new(),
        time: 0,
        edge_stack: Vec::new(),
        blocks: Vec::new(),
        cuts: VertexSet::new(),
    };
    let root = g.vertices().next().expect("connected graphs are nonempty");
    st.dfs(root, None);
    let mut blocks = st.blocks;
    if g.num_vertices() == 1 {
        blocks.push(VertexSet::from([root]));
    }
    blocks.sort();
    let nontrivial_blocks = blocks.iter().filter(|b| b.len() > 2).cloned().collect();
    Ok(BlockDecomposition {
        blocks,
        cut_vertices: st.cuts,
        nontrivial_blocks,
    })
}

// ---------------------------------------------------------------------------
// Articulated set tree
// ---------------------------------------------------------------------------

/// Edge of an articulated set tree between parts `a < b`; `art_a ∈ parts[a]`
/// and `art_b ∈ parts[b]` are the articulation vertices realising it. When
/// both parts share a cut vertex, `art_a == art_b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AstEdge {
    pub a: usize,
    pub b: usize,
    pub art_a: Vertex,
    pub art_b: Vertex,
}

impl AstEdge {
    /// Builds the edge with endpoints normalised so that `a < b`.
    pub fn new(a: usize, b: usize, art_a: Vertex, art_b: Vertex) -> Self {
        if a <= b {
            AstEdge { a, b, art_a, art_b }
        } else {
            AstEdge {
                a: b,
                b: a,
                art_a: art_b,
                art_b: art_a,
            }
        }
    }
}

/// Tree whose nodes ("parts") are non-trivial blocks and singletons of the
/// remaining vertices, with articulation vertices on every edge.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "AstJson", try_from = "AstJson")]
pub struct ArticulatedSetTree {
    pub parts: Vec<VertexSet>,
    pub edges: Vec<AstEdge>,
}

/// Wire format `{"parts": [[...]], "edges": [[i,j]], "articulation": [[i,j,u,v]]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AstJson {
    pub parts: Vec<Vec<Vertex>>,
    pub edges: Vec<[usize; 2]>,
    pub articulation: Vec<[usize; 4]>,
}

impl From<ArticulatedSetTree> for AstJson {
    fn from(t: ArticulatedSetTree) -> Self {
        AstJson {
            parts: t.parts.iter().map(|p| p.iter().copied().collect()).collect(),
            edges: t.edges.iter().map(|e| [e.a, e.b]).collect(),
            articulation: t.edges.iter().map(|e| [e.a, e.b, e.art_a, e.art_b]).collect(),
        }
    }
}

impl TryFrom<AstJson> for ArticulatedSetTree {
    type Error = NomadError;
    fn try_from(j: AstJson) -> Result<Self> {
        let mut arts = BTreeMap::new();
        for [i, k, u, v] in j.articulation {
            arts.insert((i, k), (u, v));
        }
        let mut edges = Vec::new();
        for [i, k] in j.edges {
            let (u, v) = arts
                .get(&(i, k))
                .copied()
                .or_else(|| arts.get(&(k, i)).map(|&(u, v)| (v, u)))
                .ok_or_else(|| NomadError::InvalidAst(format!("edge ({i},{k}) lacks articulation")))?;
            edges.push(AstEdge::new(i, k, u, v));
        }
        edges.sort();
        let t = ArticulatedSetTree {
            parts: j.parts.into_iter().map(|p| p.into_iter().collect()).collect(),
            edges,
        };
        t.validate()?;
        Ok(t)
    }
}

impl ArticulatedSetTree {
    /// All vertices covered by the parts.
    pub fn vertex_set(&self) -> VertexSet {
        self.parts.iter().flatten().copied().collect()
    }

    /// Indices of the parts containing `v`.
    pub fn parts_containing(&self, v: Vertex) -> Vec<usize> {
        (0..self.parts.len()).filter(|&i| self.parts[i].contains(&v)).collect()
    }

    /// Non-singleton parts.
    pub fn block_parts(&self) -> Vec<&VertexSet> {
        self.parts.iter().filter(|p| p.len() > 1).collect()
    }

    /// Checks that the part graph is a tree, that articulation vertices lie in
    /// their parts, that non-singleton parts have at least three vertices, and
    /// that singleton vertices appear in no other part.
    pub fn validate(&self) -> Result<()> {
        let n = self.parts.len();
        if n == 0 {
            return Err(NomadError::InvalidAst("no parts".into()));
        }
        if self.edges.len() + 1 != n {
            return Err(NomadError::InvalidAst(format!(
                "{} parts but {} edges",
                n,
                self.edges.len()
            )));
        }
        for p in &self.parts {
            if p.is_empty() || p.len() == 2 {
                return Err(NomadError::InvalidAst(format!("part {p:?} has invalid size")));
            }
        }
        for (i, p) in self.parts.iter().enumerate() {
            if p.len() == 1 {
                let v = *p.iter().next().unwrap();
                if self.parts_containing(v).len() > 1 {
                    return Err(NomadError::InvalidAst(format!(
                        "singleton part {i} vertex {v} appears in another part"
                    )));
                }
            }
        }
        let mut uf = UnionFind::new(n);
        for e in &self.edges {
            if e.a >= n || e.b >= n || e.a == e.b {
                return Err(NomadError::InvalidAst(format!("bad edge {e:?}")));
            }
            if !self.parts[e.a].contains(&e.art_a) || !self.parts[e.b].contains(&e.art_b) {
                return Err(NomadError::InvalidAst(format!(
                    "articulation of {e:?} outside its parts"
                )));
            }
            if !uf.union(e.a, e.b) {
                return Err(NomadError::InvalidAst("part graph has a cycle".into()));
            }
        }
        Ok(())
    }
}

/// Articulated set tree of a connected graph.
///
/// Parts are the non-trivial blocks plus singletons of every vertex outside
/// them, sorted lexicographically. Each vertex has an *anchor* part: its only
/// part, or the first non-trivial block containing it. A bridge `{u, v}`
/// joins the anchors of `u` and `v` with articulation `(u, v)`; every other
/// non-trivial block containing a shared vertex `c` joins the anchor of `c`
/// with articulation `(c, c)`. The result is always a tree.
pub fn build_ast(g: &UndirectedGraph) -> Result<ArticulatedSetTree> {
    let bd = block_decomposition(g)?;
    let in_block: VertexSet = bd.nontrivial_blocks.iter().flatten().copied().collect();
    let mut parts: Vec<VertexSet> = bd.nontrivial_blocks.clone();
    parts.extend(
        g.vertices()
            .filter(|v| !in_block.contains(v))
            .map(|v| VertexSet::from([v])),
    );
    parts.sort();
    let mut anchor: BTreeMap<Vertex, usize> = BTreeMap::new();
    for (i, p) in parts.iter().enumerate() {
        for &v in p {
            anchor.entry(v).or_insert(i);
        }
    }
    let mut edges = Vec::new();
    for (u, v) in bd.bridges() {
        edges.push(AstEdge::new(anchor[&u], anchor[&v], u, v));
    }
    for (i, p) in parts.iter().enumerate() {
        if p.len() < 3 {
            continue;
        }
        for &c in p {
            if anchor[&c] != i {
                edges.push(AstEdge::new(anchor[&c], i, c, c));
            }
        }
    }
    edges.sort();
    let t = ArticulatedSetTree { parts, edges };
    debug_assert!(t.validate().is_ok());
    Ok(t)
}

/// A representative graph of an articulated set tree: each non-singleton part
/// becomes a cycle through its sorted vertices and each edge whose
/// articulation vertices differ becomes a graph edge. Fails when the tree's
/// non-singleton parts are not exactly the non-trivial blocks of that graph.
pub fn ast_representative_graph(t: &ArticulatedSetTree) -> Result<UndirectedGraph> {
    t.validate()?;
    let mut h = UndirectedGraph::with_vertices(t.vertex_set());
    for p in &t.parts {
        if p.len() >= 3 {
            let vs: Vec<Vertex> = p.iter().copied().collect();
            for k in 0..vs.len() {
                let (u, v) = (vs[k], vs[(k + 1) % vs.len()]);
                h.add_edge(u, v)?;
            }
        }
    }
    for e in &t.edges {
        if e.art_a != e.art_b {
            h.add_edge(e.art_a, e.art_b)?;
        }
    }
    let bd = block_decomposition(&h)
        .map_err(|_| NomadError::InvalidAst("representative graph is disconnected".into()))?;
    let mut expected: Vec<VertexSet> = t.block_parts().into_iter().cloned().collect();
    expected.sort();
    if bd.nontrivial_blocks != expected {
        return Err(NomadError::InvalidAst(
            "parts are not the non-trivial blocks of the represented graph".into(),
        ));
    }
    Ok(h)
}

// ---------------------------------------------------------------------------
// Separators and star triplets
// ---------------------------------------------------------------------------

fn check_vertices(g: &UndirectedGraph, vs: impl IntoIterator<Item = Vertex>) -> Result<()> {
    for v in vs {
        if !g.has_vertex(v) {
            return Err(NomadError::UnknownVertex(v));
        }
    }
    Ok(())
}

/// True iff every path from `a` to `b` meets `s`.
pub fn is_separator(g: &UndirectedGraph, s: &VertexSet, a: &VertexSet, b: &VertexSet) -> Result<bool> {
    check_vertices(g, s.iter().chain(a).chain(b).copied())?;
    if !s.is_disjoint(a) || !s.is_disjoint(b) || !a.is_disjoint(b) {
        return Err(NomadError::Overlap(format!("s={s:?} a={a:?} b={b:?}")));
    }
    let mut blocked = s.clone();
    blocked.extend(a.iter().copied());
    let mut seen = a.clone();
    let mut queue: VecDeque<Vertex> = a.iter().copied().collect();
    while let Some(u) = queue.pop_front() {
        for w in g.neighbors(u) {
            if b.contains(&w) {
                return Ok(false);
            }
            if !blocked.contains(&w) && seen.insert(w) {
                queue.push_back(w);
            }
        }
    }
    Ok(true)
}

fn distinct_triple(g: &UndirectedGraph, u: [Vertex; 3]) -> Result<()> {
    if u[0] == u[1] || u[0] == u[2] || u[1] == u[2] {
        return Err(NomadError::NonDistinctTriple);
    }
    check_vertices(g, u)
}

/// True iff the members of `u` other than those in `s` lie in pairwise
/// distinct components of `g - s`.
fn mutually_separates(g: &UndirectedGraph, s: &VertexSet, u: [Vertex; 3]) -> bool {
    let comp = g.components_without(s);
    let ids: Vec<usize> = u.iter().filter_map(|v| comp.get(v).copied()).collect();
    let distinct: BTreeSet<usize> = ids.iter().copied().collect();
    distinct.len() == ids.len()
}

fn for_each_combination(items: &[Vertex], k: usize, f: &mut impl FnMut(&[Vertex])) {
    fn rec(items: &[Vertex], k: usize, start: usize, cur: &mut Vec<Vertex>, f: &mut impl FnMut(&[Vertex])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        let need = k - cur.len();
        for i in start..=items.len().saturating_sub(need) {
            if i >= items.len() {
                break;
            }
            cur.push(items[i]);
            rec(items, k, i + 1, cur, f);
            cur.pop();
        }
    }
    rec(items, k, 0, &mut Vec::with_capacity(k), f);
}

/// Minimum-cardinality mutual separators of the triple `u`.
///
/// A mutual separator is either a set of vertices outside `u` meeting every
/// path between each pair of `u`, or a single member of `u` lying on every
/// path between the other two. Exhaustive search; graphs above
/// [`EXHAUSTIVE_VERTEX_LIMIT`] vertices are refused. Returns an empty list
/// when no mutual separator exists (e.g. two members are adjacent).
pub fn minimal_mutual_separators(g: &UndirectedGraph, u: [Vertex; 3]) -> Result<Vec<VertexSet>> {
    if g.num_vertices() > EXHAUSTIVE_VERTEX_LIMIT {
        return Err(NomadError::BudgetExceeded {
            size: g.num_vertices(),
            limit: EXHAUSTIVE_VERTEX_LIMIT,
        });
    }
    distinct_triple(g, u)?;
    let interior: Vec<Vertex> = g.vertices().filter(|v| !u.contains(v)).collect();
    // Member separators have size one even when no other vertex exists.
    for k in 0..=interior.len().max(1) {
        let mut found: BTreeSet<VertexSet> = BTreeSet::new();
        for_each_combination(&interior, k, &mut |combo| {
            let s: VertexSet = combo.iter().copied().collect();
            if mutually_separates(g, &s, u) {
                found.insert(s);
            }
        });
        if k == 1 {
            for &x in &u {
                let s = VertexSet::from([x]);
                if mutually_separates(g, &s, u) {
                    found.insert(s);
                }
            }
        }
        if !found.is_empty() {
            return Ok(found.into_iter().collect());
        }
    }
    Ok(Vec::new())
}

/// The ancestor of a star triplet: the unique vertex `r` such that the
/// members of `u` other than `r` lie in pairwise distinct components of
/// `g - r`. `None` when `u` is not a star triplet.
pub fn star_ancestor(g: &UndirectedGraph, u: [Vertex; 3]) -> Result<Option<Vertex>> {
    distinct_triple(g, u)?;
    for r in g.vertices() {
        if mutually_separates(g, &VertexSet::from([r]), u) {
            return Ok(Some(r));
        }
    }
    Ok(None)
}

/// Entry points of a non-star triple into the non-trivial block where its
/// connecting paths meet.
///
/// For every vertex `x` and block `B`, all paths from `x` to `B` enter `B`
/// through one vertex, the gate of `x` (`x` itself when `x ∈ B`). A triple
/// whose noisy copies are not a star triplet of the joint graph has exactly
/// one non-trivial block in which the three gates are distinct; the sorted
/// gates are returned. Star triplets give `None`.
///
/// The triplet distances of such a triple depend only on its gates, so two
/// triples with equal gates satisfy every identity of the TIA test even
/// though neither is a star triplet.
pub fn block_gates(g: &UndirectedGraph, u: [Vertex; 3]) -> Result<Option<[Vertex; 3]>> {
    if star_ancestor(g, u)?.is_some() {
        return Ok(None);
    }
    let bd = block_decomposition(g)?;
    for b in &bd.nontrivial_blocks {
        let mut gates = [0; 3];
        for (k, &x) in u.iter().enumerate() {
            gates[k] = if b.contains(&x) {
                x
            } else {
                let reach = g.reachable_avoiding(x, b);
                let mut entries = b.iter().copied().filter(|&v| g.neighbors(v).any(|w| reach.contains(&w)));
                match (entries.next(), entries.next()) {
                    (Some(v), None) => v,
                    _ => unreachable!("a block is entered through a single vertex"),
                }
            };
        }
        if gates[0] != gates[1] && gates[0] != gates[2] && gates[1] != gates[2] {
            gates.sort_unstable();
            return Ok(Some(gates));
        }
    }
    Ok(None)
}

/// How the noisy copies of a triple sit in the joint graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TripleClass {
    /// Star triplet with this ancestor.
    Star(Vertex),
    /// Non-star triple with these (sorted) block gates.
    Gates([Vertex; 3]),
}

/// Precomputed separation data answering [`star_ancestor`] and
/// [`block_gates`] for many triples of one graph.
#[derive(Clone, Debug)]
pub struct TripleClassifier {
    /// Component id of every vertex in `g - r`, per vertex `r`.
    without: BTreeMap<Vertex, BTreeMap<Vertex, usize>>,
    /// Gate of every vertex, per non-trivial block.
    gates: Vec<BTreeMap<Vertex, Vertex>>,
}

impl TripleClassifier {
    pub fn new(g: &UndirectedGraph) -> Result<Self> {
        let without = g
            .vertices()
            .map(|r| (r, g.components_without(&VertexSet::from([r]))))
            .collect();
        let bd = block_decomposition(g)?;
        let gates = bd
            .nontrivial_blocks
            .iter()
            .map(|b| {
                let mut m = BTreeMap::new();
                for &v in b {
                    let others: VertexSet = b.iter().copied().filter(|&w| w != v).collect();
                    for x in g.reachable_avoiding(v, &others) {
                        m.insert(x, v);
                    }
                }
                m
            })
            .collect();
        Ok(TripleClassifier { without, gates })
    }

    /// Class of a triple of distinct vertices.
    pub fn classify(&self, u: [Vertex; 3]) -> TripleClass {
        for (&r, comp) in &self.without {
            let ids: Vec<usize> = u.iter().filter_map(|v| comp.get(v).copied()).collect();
            if (ids.len() == 3 && ids[0] != ids[1] && ids[0] != ids[2] && ids[1] != ids[2])
                || (ids.len() == 2 && ids[0] != ids[1])
            {
                return TripleClass::Star(r);
            }
        }
        for m in &self.gates {
            let mut g = u.map(|x| m[&x]);
            if g[0] != g[1] && g[0] != g[2] && g[1] != g[2] {
                g.sort_unstable();
                return TripleClass::Gates(g);
            }
        }
        unreachable!("every triple is a star triplet or meets inside a non-trivial block")
    }
}

// ---------------------------------------------------------------------------
// Joint graph
// ---------------------------------------------------------------------------

/// Id of the noisy copy of `v` in a joint graph over `p` vertices.
pub fn copy_of(v: Vertex, p: usize) -> Vertex {
    v + p
}

/// The graph together with a degree-1 copy `i + p` of every vertex `i`.
pub fn joint_graph(g: &UndirectedGraph) -> Result<UndirectedGraph> {
    let p = g.require_dense_labels()?;
    let mut j = g.clone();
    for v in 1..=p {
        j.add_vertex(copy_of(v, p));
        j.add_edge(v, copy_of(v, p))?;
    }
    Ok(j)
}

/// Vertices of `g` that are the ancestor of some star triplet of copies in the
/// joint graph, i.e. the vertices whose removal disconnects `g`.
pub fn joint_ancestors(g: &UndirectedGraph) -> Result<VertexSet> {
    g.require_connected()?;
    Ok(g.vertices()
        .filter(|&a| {
            let comp = g.components_without(&VertexSet::from([a]));
            comp.values().collect::<BTreeSet<_>>().len() > 1
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Equivalence relation
// ---------------------------------------------------------------------------

/// The unique neighbour of a leaf.
fn leaf_neighbor(g: &UndirectedGraph, v: Vertex) -> Option<Vertex> {
    if g.degree(v) == 1 {
        g.neighbors(v).next()
    } else {
        None
    }
}

/// All remote leaf sets: sets of leaves whose neighbours are pairwise
/// distinct and are not themselves in the set. Sorted lexicographically.
pub fn remote_leaf_sets(g: &UndirectedGraph) -> Result<Vec<VertexSet>> {
    g.require_connected()?;
    let leaves: Vec<Vertex> = g.leaves().into_iter().collect();
    if leaves.len() > REMOTE_LEAF_LIMIT {
        return Err(NomadError::BudgetExceeded {
            size: leaves.len(),
            limit: REMOTE_LEAF_LIMIT,
        });
    }
    let mut out = Vec::new();
    for mask in 0u32..(1u32 << leaves.len()) {
        let r: VertexSet = (0..leaves.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| leaves[i])
            .collect();
        if is_remote(g, &r) {
            out.push(r);
        }
    }
    out.sort();
    Ok(out)
}

fn is_remote(g: &UndirectedGraph, r: &VertexSet) -> bool {
    let mut nbrs = VertexSet::new();
    for &v in r {
        match leaf_neighbor(g, v) {
            Some(n) if !r.contains(&n) && nbrs.insert(n) => {}
            _ => return false,
        }
    }
    true
}

/// `G_R`: exchanges the label of every leaf in the remote set `r` with the
/// label of its neighbour.
pub fn apply_leaf_swap(g: &UndirectedGraph, r: &VertexSet) -> Result<UndirectedGraph> {
    check_vertices(g, r.iter().copied())?;
    if !is_remote(g, r) {
        return Err(NomadError::NotRemote(r.iter().copied().collect()));
    }
    let mut perm: BTreeMap<Vertex, Vertex> = BTreeMap::new();
    for &l in r {
        let n = leaf_neighbor(g, l).expect("remote members are leaves");
        perm.insert(l, n);
        perm.insert(n, l);
    }
    Ok(g.relabel(|v| perm.get(&v).copied().unwrap_or(v)))
}

/// Families, non-cut block vertices, leaf-free cut vertices and their
/// neighbourhoods: the data that characterises an equivalence class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceSignature {
    /// Each family is a non-leaf vertex with at least one leaf neighbour,
    /// together with those leaves (a single edge forms one family).
    pub families: BTreeSet<VertexSet>,
    /// Non-cut vertices of non-trivial blocks.
    pub noncut_union: VertexSet,
    /// Cut vertices with no leaf neighbour.
    pub k_set: VertexSet,
    /// Neighbourhood of each member of `k_set`.
    pub art_neighbors: BTreeMap<Vertex, VertexSet>,
}

fn families(g: &UndirectedGraph) -> BTreeSet<VertexSet> {
    let mut out = BTreeSet::new();
    for c in g.vertices() {
        let leaves: VertexSet = g.neighbors(c).filter(|&v| g.degree(v) == 1).collect();
        if leaves.is_empty() {
            continue;
        }
        // A single edge between two leaves yields the same family from both
        // endpoints; the set deduplicates it.
        let mut f = leaves;
        f.insert(c);
        out.insert(f);
    }
    out
}

/// The equivalence signature of a connected graph.
pub fn equivalence_signature(g: &UndirectedGraph) -> Result<EquivalenceSignature> {
    let bd = block_decomposition(g)?;
    let k_set: VertexSet = bd
        .cut_vertices
        .iter()
        .copied()
        .filter(|&c| g.neighbors(c).all(|v| g.degree(v) != 1))
        .collect();
    let art_neighbors = k_set.iter().map(|&k| (k, g.neighbor_set(k))).collect();
    Ok(EquivalenceSignature {
        families: families(g),
        noncut_union: bd.noncut_union(),
        k_set,
        art_neighbors,
    })
}

/// Canonical token of a vertex: members of a family collapse to the family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Token {
    Vertex(Vertex),
    Family(Vertex),
}

/// Complete invariant of the equivalence class of a connected graph.
#[derive(Debug, PartialEq, Eq)]
struct CanonicalForm {
    families: BTreeSet<VertexSet>,
    blocks: BTreeSet<BTreeSet<Token>>,
    bridges: BTreeSet<(Token, Token)>,
}

fn canonical_form(g: &UndirectedGraph) -> Result<CanonicalForm> {
    let bd = block_decomposition(g)?;
    let fams = families(g);
    let mut token: BTreeMap<Vertex, Token> = g.vertices().map(|v| (v, Token::Vertex(v))).collect();
    for f in &fams {
        let t = Token::Family(*f.iter().next().unwrap());
        for &v in f {
            token.insert(v, t);
        }
    }
    let blocks = bd
        .nontrivial_blocks
        .iter()
        .map(|b| b.iter().map(|v| token[v]).collect())
        .collect();
    let bridges = bd
        .bridges()
        .into_iter()
        .filter(|&(u, v)| g.degree(u) > 1 && g.degree(v) > 1)
        .map(|(u, v)| {
            let (a, b) = (token[&u], token[&v]);
            if a <= b {
                (a, b)
            } else {
                (b, a)
            }
        })
        .collect();
    Ok(CanonicalForm {
        families: fams,
        blocks,
        bridges,
    })
}

/// Right-hand side of an equivalence query.
#[derive(Clone, Copy, Debug)]
pub enum EquivalenceTarget<'a> {
    Graph(&'a UndirectedGraph),
    Ast(&'a ArticulatedSetTree),
}

impl<'a> From<&'a UndirectedGraph> for EquivalenceTarget<'a> {
    fn from(g: &'a UndirectedGraph) -> Self {
        EquivalenceTarget::Graph(g)
    }
}

impl<'a> From<&'a ArticulatedSetTree> for EquivalenceTarget<'a> {
    fn from(t: &'a ArticulatedSetTree) -> Self {
        EquivalenceTarget::Ast(t)
    }
}

/// Whether the target lies in the equivalence class of `g`: reachable by one
/// remote leaf swap followed by rewiring inside non-trivial blocks that keeps
/// each block biconnected. Decided exactly by comparing canonical forms in
/// which every family collapses to a single token. For a tree target, parts
/// and articulation edges are compared; edges inside parts never are.
pub fn same_equivalence_class<'a>(g: &UndirectedGraph, target: impl Into<EquivalenceTarget<'a>>) -> Result<bool> {
    let h_owned;
    let h = match target.into() {
        EquivalenceTarget::Graph(h) => h,
        EquivalenceTarget::Ast(t) => {
            h_owned = ast_representative_graph(t)?;
            &h_owned
        }
    };
    if g.vertex_set() != h.vertex_set() {
        return Err(NomadError::LabelMismatch);
    }
    Ok(canonical_form(g)? == canonical_form(h)?)
}

/// The neighbour conditions for equivalence, evaluated on bridges:
/// identical families, non-cut unions and `K` sets, and for every `k ∈ K` and
/// every bridge neighbour `i` of `k` in `g`, either `i ∈ K` and `{i,k}` is an
/// edge of `h`, or some member of the family containing `i` is adjacent to `k`
/// in `h`. Necessary for equivalence but not sufficient.
pub fn neighbor_conditions_hold(g: &UndirectedGraph, h: &UndirectedGraph) -> Result<bool> {
    let sg = equivalence_signature(g)?;
    let sh = equivalence_signature(h)?;
    if sg.families != sh.families || sg.noncut_union != sh.noncut_union || sg.k_set != sh.k_set {
        return Ok(false);
    }
    let bd = block_decomposition(g)?;
    let bridges: BTreeSet<(Vertex, Vertex)> = bd.bridges().into_iter().collect();
    for &k in &sg.k_set {
        for i in g.neighbors(k) {
            if !bridges.contains(&(k.min(i), k.max(i))) {
                continue;
            }
            if sg.k_set.contains(&i) {
                if !h.has_edge(i, k) {
                    return Ok(false);
                }
            } else if let Some(f) = sg.families.iter().find(|f| f.contains(&i)) {
                if !f.iter().any(|&j| h.has_edge(j, k)) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// Union-find
// ---------------------------------------------------------------------------

/// Disjoint-set forest with path halving and union by size.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges the sets of `a` and `b`; false when already merged.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }

    /// Groups of indices, each sorted, ordered by smallest member.
    pub fn groups(&mut self) -> Vec<Vec<usize>> {
        let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..self.parent.len() {
            let r = self.find(i);
            by_root.entry(r).or_default().push(i);
        }
        let mut out: Vec<Vec<usize>> = by_root.into_values().collect();
        out.sort_by_key(|g| g[0]);
        out
    }
}

/// Triangle blocks with at least one vertex that is not a cut vertex.
///
/// Information distances of such a triangle are those of a tree in which a
/// hidden vertex joins the three corners (any three-point metric is a tree
/// metric), and that hidden vertex can be read as the noiseless original of
/// a non-cut corner. With distances alone the triangle is then
/// indistinguishable from a path through that corner whenever the implied
/// edge lengths are nonnegative, so recovery can fail on these blocks.
pub fn distance_ambiguous_triangles(g: &UndirectedGraph) -> Result<Vec<VertexSet>> {
    let bd = block_decomposition(g)?;
    Ok(bd
        .nontrivial_blocks
        .iter()
        .filter(|b| b.len() == 3 && b.iter().any(|v| !bd.cut_vertices.contains(v)))
        .cloned()
        .collect())
}
