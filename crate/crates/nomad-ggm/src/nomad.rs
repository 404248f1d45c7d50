//! The recovery pipeline: triplet-ancestor (TIA) testing, ancestor
//! identification with hidden-ancestor distance extension, leaf and internal
//! clustering, the non-cut test, partitioning, and edge learning. The output is
//! an articulated set tree over the observed labels.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NomadError, Result};
use crate::ggm::{empirical_distances, DistanceMatrix, ModelMargins};
use crate::graph::{build_ast, ArticulatedSetTree, UndirectedGraph, UnionFind, Vertex, VertexSet};

/// Absolute tolerance standing in for exact equality on population inputs.
pub const POPULATION_TOLERANCE: f64 = 1e-9;

/// Thresholds of the distance tests.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// TIA threshold.
    pub xi: f64,
    /// Width of the groups formed by [`eps_mode`].
    pub eps_d: f64,
    /// Width of the additivity (separation) test.
    pub sep_tol: f64,
}

impl Tolerances {
    /// Exact-arithmetic stand-in for population distances.
    pub fn population() -> Self {
        Tolerances {
            xi: POPULATION_TOLERANCE,
            eps_d: POPULATION_TOLERANCE,
            sep_tol: POPULATION_TOLERANCE,
        }
    }

    /// `ξ = ζ/4`, `ε_d = min(ξ/14, γ)`, separation width `ε_d/6`.
    pub fn from_margins(m: &ModelMargins) -> Self {
        Self::from_xi(m.zeta / 4.0, Some(m.gamma))
    }

    /// `ε_d = min(ξ/14, γ)` (or `ξ/14` without `γ`) and width `ε_d/6`.
    pub fn from_xi(xi: f64, gamma: Option<f64>) -> Self {
        let eps_d = gamma.map_or(xi / 14.0, |g| (xi / 14.0).min(g));
        Tolerances {
            xi,
            eps_d,
            sep_tol: eps_d / 6.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.xi >= 0.0 && self.eps_d >= 0.0 && self.sep_tol >= 0.0 {
            Ok(())
        } else {
            Err(NomadError::InvalidParameter(format!("negative tolerance in {self:?}")))
        }
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::population()
    }
}

// ---------------------------------------------------------------------------
// Triplet distances and the TIA test
// ---------------------------------------------------------------------------

/// All 3-subsets of `0..n` in lexicographic order.
pub fn triples(n: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                out.push([a, b, c]);
            }
        }
    }
    out
}

fn half_sum(d: &DMatrix<f64>, x: usize, y: usize, z: usize) -> f64 {
    0.5 * (d[(x, y)] + d[(x, z)] - d[(y, z)])
}

/// Triples over matrix indices together with their triplet distances.
#[derive(Clone, Debug)]
pub struct TripleTable {
    n: usize,
    /// Row-major copy of the distance matrix.
    d: Vec<f64>,
    triples: Vec<[usize; 3]>,
    dx: Vec<[f64; 3]>,
}

impl TripleTable {
    pub fn new(d: &DMatrix<f64>, triples: Vec<[usize; 3]>) -> Self {
        let dx = triples
            .iter()
            .map(|&[a, b, c]| [half_sum(d, a, b, c), half_sum(d, b, a, c), half_sum(d, c, a, b)])
            .collect();
        let n = d.nrows();
        TripleTable {
            n,
            d: (0..n * n).map(|i| d[(i / n, i % n)]).collect(),
            triples,
            dx,
        }
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triple(&self, i: usize) -> [usize; 3] {
        self.triples[i]
    }

    /// Triplet distances of the members of triple `i`, in member order.
    pub fn dx(&self, i: usize) -> [f64; 3] {
        self.dx[i]
    }

    /// For member `k` of triple `a`, the second smallest over `y ∈ W` of
    /// `|d_x^U + d_y^W - d_xy|`: the best achievable maximum over two
    /// distinct members of `W`.
    #[inline]
    fn member_score(&self, a: usize, k: usize, b: usize) -> f64 {
        let x = self.triples[a][k];
        let dxu = self.dx[a][k];
        let w = self.triples[b];
        let dw = self.dx[b];
        let row = &self.d[x * self.n..(x + 1) * self.n];
        second_smallest([
            (dxu + dw[0] - row[w[0]]).abs(),
            (dxu + dw[1] - row[w[1]]).abs(),
            (dxu + dw[2] - row[w[2]]).abs(),
        ])
    }

    /// [`tia_score`] if it is below `bound`, otherwise some value `≥ bound`.
    #[inline]
    pub fn tia_score_below(&self, a: usize, b: usize, bound: f64) -> f64 {
        let mut s: f64 = 0.0;
        for k in 0..3 {
            s = s.max(self.member_score(a, k, b));
            if s >= bound {
                return s;
            }
        }
        s
    }
}

#[inline]
fn second_smallest(e: [f64; 3]) -> f64 {
    let (lo, hi) = if e[0] <= e[1] { (e[0], e[1]) } else { (e[1], e[0]) };
    if e[2] >= hi {
        hi
    } else if e[2] >= lo {
        e[2]
    } else {
        lo
    }
}

/// `max_{x ∈ U} min_{y ≠ z ∈ W} max(|d_x^U + d_y^W - d_xy|, |d_x^U + d_z^W - d_xz|)`;
/// the TIA test passes iff this is at most `ξ`.
pub fn tia_score(t: &TripleTable, a: usize, b: usize) -> f64 {
    (0..3).map(|k| t.member_score(a, k, b)).fold(0.0, f64::max)
}

/// One-directional TIA test between triples `a` and `b` of the table.
pub fn tia_pass(t: &TripleTable, a: usize, b: usize, xi: f64) -> bool {
    (0..3).all(|k| t.member_score(a, k, b) <= xi)
}

fn label_index(dist: &DistanceMatrix, l: i64) -> Result<usize> {
    dist.index_of(l)
        .ok_or_else(|| NomadError::InvalidParameter(format!("label {l} not in distance matrix")))
}

fn check_triple(u: [i64; 3]) -> Result<()> {
    if u[0] == u[1] || u[0] == u[2] || u[1] == u[2] {
        Err(NomadError::NonDistinctTriple)
    } else {
        Ok(())
    }
}

/// `d_x^U = (d_xy + d_xz - d_yz) / 2` for `U = {x, y, z}`; negative values
/// are possible for triples that are not star triplets.
pub fn triplet_distance(x: i64, u: [i64; 3], dist: &DistanceMatrix) -> Result<f64> {
    check_triple(u)?;
    let k = u
        .iter()
        .position(|&m| m == x)
        .ok_or_else(|| NomadError::InvalidParameter(format!("{x} is not a member of {u:?}")))?;
    let idx = [label_index(dist, u[0])?, label_index(dist, u[1])?, label_index(dist, u[2])?];
    let (y, z) = match k {
        0 => (idx[1], idx[2]),
        1 => (idx[0], idx[2]),
        _ => (idx[0], idx[1]),
    };
    Ok(half_sum(&dist.values, idx[k], y, z))
}

/// TIA test on labelled triples: for every `x ∈ u` some pair of distinct
/// `y, z ∈ w` satisfies both `|d_x^u + d_y^w - d_xy| ≤ ξ` and
/// `|d_x^u + d_z^w - d_xz| ≤ ξ`.
pub fn tia(u: [i64; 3], w: [i64; 3], dist: &DistanceMatrix, tol: &Tolerances) -> Result<bool> {
    check_triple(u)?;
    check_triple(w)?;
    let mut idx = Vec::new();
    for l in u.iter().chain(&w) {
        idx.push(label_index(dist, *l)?);
    }
    let t = TripleTable::new(&dist.values, vec![[idx[0], idx[1], idx[2]], [idx[3], idx[4], idx[5]]]);
    Ok(tia_pass(&t, 0, 1, tol.xi))
}

// ---------------------------------------------------------------------------
// ε_d-mode
// ---------------------------------------------------------------------------

/// Result of [`eps_mode_with_support`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeResult {
    pub value: f64,
    /// Size of the winning group.
    pub support: usize,
}

/// Greedy partition of the sorted values into groups whose spread is below
/// `eps_d`; returns the smallest member of the largest group (ties go to the
/// smallest representative) and that group's size.
pub fn eps_mode_with_support(values: &[f64], eps_d: f64) -> Result<ModeResult> {
    if values.is_empty() {
        return Err(NomadError::InvalidParameter("eps_mode of an empty list".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut best = ModeResult {
        value: v[0],
        support: 0,
    };
    let mut start = 0;
    while start < v.len() {
        let mut end = start + 1;
        while end < v.len() && v[end] - v[start] < eps_d.max(0.0) || (end < v.len() && v[end] == v[start]) {
            end += 1;
        }
        if end - start > best.support {
            best = ModeResult {
                value: v[start],
                support: end - start,
            };
        }
        start = end;
    }
    Ok(best)
}

/// The `ε_d`-mode of a nonempty list.
pub fn eps_mode(values: &[f64], eps_d: f64) -> Result<f64> {
    Ok(eps_mode_with_support(values, eps_d)?.value)
}

// ---------------------------------------------------------------------------
// Ancestor identification
// ---------------------------------------------------------------------------

/// Star-triplet collection whose ancestor is an observed (noiseless) vertex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedCollection {
    pub ancestor: i64,
    pub triples: Vec<[i64; 3]>,
}

/// Star-triplet collection bound to a freshly minted hidden label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiddenCollection {
    pub label: i64,
    pub triples: Vec<[i64; 3]>,
}

/// Ancestors found from the TIA closure.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AncestorCatalog {
    pub obs_collections: Vec<ObservedCollection>,
    pub hid_collections: Vec<HiddenCollection>,
    pub a_obs: BTreeSet<i64>,
    pub a_hid: BTreeSet<i64>,
}

impl AncestorCatalog {
    /// Observed and hidden ancestor labels together.
    pub fn ancestors(&self) -> BTreeSet<i64> {
        self.a_obs.union(&self.a_hid).copied().collect()
    }
}

/// Diagnostic for one hidden–hidden distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeDiagnostic {
    pub p: i64,
    pub q: i64,
    pub value: f64,
    pub support: usize,
    /// Number of nonnegative differences the mode was taken over.
    pub candidates: usize,
}

/// Pipeline diagnostics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub collection_sizes: Vec<usize>,
    pub modes: Vec<ModeDiagnostic>,
    pub warnings: Vec<String>,
    /// Stage wall-clock times in milliseconds (informational, not reproducible).
    pub stage_ms: BTreeMap<String, f64>,
}

/// Output of [`identify_ancestors`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AncestorStage {
    pub catalog: AncestorCatalog,
    /// Distances over the observed labels followed by the hidden labels.
    pub extended: DistanceMatrix,
    pub diagnostics: Diagnostics,
}

fn validate_observed(dist: &DistanceMatrix) -> Result<()> {
    let set: BTreeSet<i64> = dist.labels.iter().copied().collect();
    if set.len() != dist.len() || set.iter().any(|&l| l <= 0) {
        return Err(NomadError::InvalidParameter(
            "observed labels must be distinct positive integers".into(),
        ));
    }
    if dist.values.nrows() != dist.len() || dist.values.ncols() != dist.len() {
        return Err(NomadError::DimensionMismatch {
            expected: dist.len(),
            got: dist.values.nrows(),
        });
    }
    Ok(())
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Why a TIA-closed collection cannot belong to a cut vertex, if it cannot.
///
/// Triples whose paths meet inside a non-trivial block pass the TIA test
/// with every other triple entering the block through the same three
/// vertices, so the closure also produces collections around such meeting
/// points. A genuine hidden ancestor `r` differs in two checkable ways: every
/// observed vertex lies in some triple of its collection (each one sits in a
/// component of the graph without `r`, or is the copy of `r`), and the copy
/// of `r` is alone on its side, i.e. additive through `r` with every other
/// vertex. Meeting points inside blocks of four or more vertices fail the
/// first check; inside triangles whose vertices are all cut vertices they
/// fail the second.
fn spurious_collection(table: &TripleTable, group: &[usize], d: &DMatrix<f64>, tol: &Tolerances) -> Option<String> {
    let n = d.nrows();
    let mut to_anc: Vec<Vec<f64>> = vec![Vec::new(); n];
    for &t in group {
        let tr = table.triple(t);
        let dx = table.dx(t);
        for k in 0..3 {
            to_anc[tr[k]].push(dx[k]);
        }
    }
    if let Some(j) = to_anc.iter().position(Vec::is_empty) {
        return Some(format!("no triple contains index {j}"));
    }
    let h: Vec<f64> = to_anc.iter_mut().map(|v| median(v)).collect();
    let width = tol.xi.max(tol.sep_tol);
    let alone = (0..n).any(|x| (0..n).all(|y| y == x || (h[x] + h[y] - d[(x, y)]).abs() <= width));
    if alone {
        None
    } else {
        Some("no vertex is alone on its side of the shared ancestor".into())
    }
}

/// Groups observed triples into star-triplet collections sharing an
/// ancestor, labels each collection's ancestor as observed or hidden, and
/// extends the distance matrix to the hidden ancestors.
///
/// Collections are the connected components of the graph on triples whose
/// edges are pairs passing the TIA test in both directions. A collection
/// with a single triple is kept only when it reveals an observed ancestor.
/// An ancestor is observed when some triple `{u, v, w}` of its collection
/// satisfies `|d_uv + d_vw - d_uw| ≤ sep_tol`; the most frequent such middle
/// vertex (ties to the smallest label) is the ancestor.
pub fn identify_ancestors(dist: &DistanceMatrix, tol: &Tolerances) -> Result<AncestorStage> {
    validate_observed(dist)?;
    tol.validate()?;
    let mut diagnostics = Diagnostics::default();
    let n = dist.len();
    let d = &dist.values;
    let table = TripleTable::new(d, triples(n));

    let clock = Instant::now();
    let passing: Vec<Vec<usize>> = (0..table.len())
        .into_par_iter()
        .map(|a| {
            (a + 1..table.len())
                .filter(|&b| tia_pass(&table, a, b, tol.xi) && tia_pass(&table, b, a, tol.xi))
                .collect()
        })
        .collect();
    let mut uf = UnionFind::new(table.len());
    for (a, bs) in passing.iter().enumerate() {
        for &b in bs {
            uf.union(a, b);
        }
    }
    diagnostics
        .stage_ms
        .insert("tia_closure".into(), clock.elapsed().as_secs_f64() * 1e3);

    // Observed-ancestor test per collection.
    let mut obs_by_ancestor: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut hidden: Vec<Vec<usize>> = Vec::new();
    for group in uf.groups() {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &t in &group {
            let [a, b, c] = table.triple(t);
            for (m, x, y) in [(a, b, c), (b, a, c), (c, a, b)] {
                if (d[(x, m)] + d[(m, y)] - d[(x, y)]).abs() <= tol.sep_tol {
                    *counts.entry(m).or_default() += 1;
                }
            }
        }
        let best = counts
            .iter()
            .max_by(|(ia, ca), (ib, cb)| ca.cmp(cb).then(dist.labels[**ib].cmp(&dist.labels[**ia])))
            .map(|(&m, _)| m);
        match best {
            Some(m) => obs_by_ancestor.entry(m).or_default().extend(group),
            None if group.len() >= 2 => {
                if let Some(reason) = spurious_collection(&table, &group, d, tol) {
                    diagnostics.warnings.push(format!(
                        "discarded a collection of {} triples: {reason}",
                        group.len()
                    ));
                } else {
                    hidden.push(group);
                }
            }
            None => {}
        }
    }

    let to_labels = |g: &[usize]| -> Vec<[i64; 3]> {
        g.iter()
            .map(|&t| table.triple(t).map(|i| dist.labels[i]))
            .collect()
    };
    let mut catalog = AncestorCatalog::default();
    for (m, mut g) in obs_by_ancestor {
        g.sort_unstable();
        diagnostics.collection_sizes.push(g.len());
        catalog.a_obs.insert(dist.labels[m]);
        catalog.obs_collections.push(ObservedCollection {
            ancestor: dist.labels[m],
            triples: to_labels(&g),
        });
    }
    for (i, g) in hidden.iter().enumerate() {
        let label = -(i as i64) - 1;
        diagnostics.collection_sizes.push(g.len());
        catalog.a_hid.insert(label);
        catalog.hid_collections.push(HiddenCollection {
            label,
            triples: to_labels(g),
        });
    }

    // Extended distances.
    let h = hidden.len();
    let mut ext = DMatrix::zeros(n + h, n + h);
    ext.view_mut((0, 0), (n, n)).copy_from(d);
    for (hi, g) in hidden.iter().enumerate() {
        for j in 0..n {
            let mut vals: Vec<f64> = g
                .iter()
                .filter_map(|&t| {
                    let tr = table.triple(t);
                    tr.iter().position(|&m| m == j).map(|k| table.dx(t)[k])
                })
                .collect();
            if vals.is_empty() {
                diagnostics.warnings.push(format!(
                    "no triple of hidden collection {} contains label {}",
                    -(hi as i64) - 1,
                    dist.labels[j]
                ));
                vals = g
                    .iter()
                    .flat_map(|&t| {
                        let tr = table.triple(t);
                        let dx = table.dx(t);
                        (0..3).map(move |k| (tr[k], dx[k]))
                    })
                    .map(|(x, dxa)| d[(j, x)] - dxa)
                    .collect();
            }
            let v = median(&mut vals).max(0.0);
            ext[(n + hi, j)] = v;
            ext[(j, n + hi)] = v;
        }
    }
    // Representative triple of each hidden collection: the one closest to
    // its ancestor.
    let reps: Vec<usize> = hidden
        .iter()
        .map(|g| {
            *g.iter()
                .min_by(|&&a, &&b| {
                    let sa: f64 = table.dx(a).iter().sum();
                    let sb: f64 = table.dx(b).iter().sum();
                    sa.total_cmp(&sb).then(a.cmp(&b))
                })
                .expect("collections are nonempty")
        })
        .collect();
    for pi in 0..h {
        for qi in pi + 1..h {
            let (up, uq) = (reps[pi], reps[qi]);
            let (tp, tq) = (table.triple(up), table.triple(uq));
            let (dp, dq) = (table.dx(up), table.dx(uq));
            let mut delta = Vec::with_capacity(9);
            for k in 0..3 {
                for l in 0..3 {
                    delta.push(d[(tp[k], tq[l])] - dp[k] - dq[l]);
                }
            }
            // Distances between distinct vertices are positive; differences
            // through a shared side come out negative and are discarded.
            let nonneg: Vec<f64> = delta.iter().copied().filter(|&v| v >= -tol.eps_d).collect();
            let pool = if nonneg.is_empty() { &delta } else { &nonneg };
            let mode = eps_mode_with_support(pool, tol.eps_d)?;
            let (lp, lq) = (-(pi as i64) - 1, -(qi as i64) - 1);
            if mode.support < 4 {
                diagnostics.warnings.push(format!(
                    "distance between hidden ancestors {lp} and {lq} has mode support {}",
                    mode.support
                ));
            }
            diagnostics.modes.push(ModeDiagnostic {
                p: lp,
                q: lq,
                value: mode.value,
                support: mode.support,
                candidates: pool.len(),
            });
            let v = mode.value.max(0.0);
            ext[(n + pi, n + qi)] = v;
            ext[(n + qi, n + pi)] = v;
        }
    }
    let mut labels = dist.labels.clone();
    labels.extend((0..h).map(|i| -(i as i64) - 1));
    Ok(AncestorStage {
        catalog,
        extended: DistanceMatrix { labels, values: ext },
        diagnostics,
    })
}

// ---------------------------------------------------------------------------
// Clusters
// ---------------------------------------------------------------------------

/// Observed vertices separated from every other ancestor by one ancestor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafCluster {
    /// The separating ancestor.
    pub l1: i64,
    pub l2: BTreeSet<i64>,
    /// Observed vertex standing in for `l1` as articulation vertex.
    pub l3: Option<i64>,
}

/// Observed vertices separated from the other ancestors by a set of ancestors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InternalCluster {
    pub i1: BTreeSet<i64>,
    pub i2: BTreeSet<i64>,
    /// Articulation vertices of the block (observed stand-ins of `i1`).
    pub i3: BTreeSet<i64>,
}

/// Output of [`learn_clusters`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Clusters {
    pub leaf: Vec<LeafCluster>,
    pub internal: Vec<InternalCluster>,
}

/// Label-indexed view of an extended distance matrix.
struct Lookup<'a> {
    dist: &'a DistanceMatrix,
    index: BTreeMap<i64, usize>,
}

impl<'a> Lookup<'a> {
    fn new(dist: &'a DistanceMatrix) -> Self {
        let index = dist.labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        Lookup { dist, index }
    }

    fn d(&self, a: i64, b: i64) -> f64 {
        self.dist.values[(self.index[&a], self.index[&b])]
    }

    /// `|d_ab + d_bc - d_ac|`: zero when `b` separates `a` from `c`.
    fn gap(&self, a: i64, b: i64, c: i64) -> f64 {
        (self.d(a, b) + self.d(b, c) - self.d(a, c)).abs()
    }
}

/// Assigns every observed non-ancestor vertex to a leaf cluster (one
/// ancestor separates it from all other ancestors) or to an internal cluster
/// keyed by the set of ancestors not separated from it by another ancestor.
pub fn learn_clusters(catalog: &AncestorCatalog, ext: &DistanceMatrix, tol: &Tolerances) -> Result<Clusters> {
    let lk = Lookup::new(ext);
    let ancestors: Vec<i64> = catalog.ancestors().into_iter().collect();
    if ancestors.is_empty() {
        return Ok(Clusters::default());
    }
    let mut leaf: BTreeMap<i64, BTreeSet<i64>> = BTreeMap::new();
    let mut internal: BTreeMap<BTreeSet<i64>, BTreeSet<i64>> = BTreeMap::new();
    for &x in ext.labels.iter().filter(|&&l| l > 0 && !catalog.a_obs.contains(&l)) {
        let leaf_of = ancestors
            .iter()
            .map(|&a| {
                let worst = ancestors
                    .iter()
                    .filter(|&&b| b != a)
                    .map(|&b| lk.gap(x, a, b))
                    .fold(0.0, f64::max);
                (a, worst)
            })
            .filter(|&(_, w)| w <= tol.sep_tol)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        if let Some((a, _)) = leaf_of {
            leaf.entry(a).or_default().insert(x);
            continue;
        }
        let visible: BTreeSet<i64> = ancestors
            .iter()
            .copied()
            .filter(|&a| {
                ancestors
                    .iter()
                    .filter(|&&b| b != a)
                    .all(|&b| lk.gap(x, b, a) > tol.sep_tol)
            })
            .collect();
        if visible.len() < 2 {
            return Err(NomadError::Pipeline {
                stage: "learn_clusters",
                message: format!("vertex {x} fits no leaf or internal cluster"),
            });
        }
        internal.entry(visible).or_default().insert(x);
    }
    Ok(Clusters {
        leaf: leaf
            .into_iter()
            .map(|(l1, l2)| LeafCluster { l1, l2, l3: None })
            .collect(),
        internal: internal
            .into_iter()
            .map(|(i1, i2)| InternalCluster {
                i1,
                i2,
                i3: BTreeSet::new(),
            })
            .collect(),
    })
}

/// Output of [`non_cut_test`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonCutResult {
    pub c_cut: BTreeSet<i64>,
    pub c_noncut: BTreeSet<i64>,
    pub l3: Option<i64>,
}

/// Splits a leaf cluster into vertices that can stand in for its ancestor
/// (`c_cut`) and non-cut vertices of pendant blocks (`c_noncut`).
///
/// With `α1 < α2` the two smallest observed labels outside the cluster, `x`
/// is non-cut iff `TIA({x,y,α1}, {x,z,α2})` fails for some `y ≤ z` in
/// `L2 \ {x}`. The designated articulation vertex is the smallest member of
/// `c_cut` for a hidden ancestor and the ancestor itself when observed.
pub fn non_cut_test(l: &LeafCluster, dist: &DistanceMatrix, v_obs: &[i64], tol: &Tolerances) -> Result<NonCutResult> {
    if l.l2.len() < 2 {
        return Err(NomadError::InvalidParameter("non-cut test needs at least two cluster members".into()));
    }
    let mut outside: Vec<i64> = v_obs.iter().copied().filter(|v| !l.l2.contains(v)).collect();
    outside.sort_unstable();
    if outside.len() < 2 {
        return Err(NomadError::InvalidParameter(
            "non-cut test needs two observed vertices outside the cluster".into(),
        ));
    }
    let (a1, a2) = (outside[0], outside[1]);
    let members: Vec<i64> = l.l2.iter().copied().collect();
    let mut c_noncut = BTreeSet::new();
    for &x in &members {
        let others: Vec<i64> = members.iter().copied().filter(|&m| m != x).collect();
        let mut noncut = false;
        'pairs: for (i, &y) in others.iter().enumerate() {
            for &z in &others[i..] {
                if !tia([x, y, a1], [x, z, a2], dist, tol)? {
                    noncut = true;
                    break 'pairs;
                }
            }
        }
        if noncut {
            c_noncut.insert(x);
        }
    }
    Ok(finish_non_cut(l, c_noncut))
}

/// Fallback for clusters without two outside vertices: `x` is non-cut iff
/// the cluster's ancestor fails to separate it from another member.
pub fn non_cut_by_separation(l: &LeafCluster, ext: &DistanceMatrix, tol: &Tolerances) -> NonCutResult {
    let lk = Lookup::new(ext);
    let c_noncut = l
        .l2
        .iter()
        .copied()
        .filter(|&x| l.l2.iter().any(|&y| y != x && lk.gap(x, l.l1, y) > tol.sep_tol))
        .collect();
    finish_non_cut(l, c_noncut)
}

fn finish_non_cut(l: &LeafCluster, c_noncut: BTreeSet<i64>) -> NonCutResult {
    let c_cut: BTreeSet<i64> = l.l2.difference(&c_noncut).copied().collect();
    let l3 = if l.l1 > 0 {
        Some(l.l1)
    } else {
        c_cut.iter().next().copied()
    };
    NonCutResult { c_cut, c_noncut, l3 }
}

// ---------------------------------------------------------------------------
// Partitioning and edges
// ---------------------------------------------------------------------------

/// Output of [`pale`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PaleOutput {
    /// Non-trivial parts (vertex sets of recovered blocks).
    pub parts: Vec<BTreeSet<i64>>,
    /// Observed articulation vertices.
    pub a_algo: BTreeSet<i64>,
    /// Observed stand-in of every ancestor.
    pub lambda: BTreeMap<i64, i64>,
    /// Edges joining an articulation vertex to a cut-type member of its leaf
    /// cluster.
    pub e_leaf: Vec<(i64, i64)>,
    /// Clusters with their designated vertices filled in.
    pub clusters: Clusters,
}

/// Ancestor pairs not separated by any third ancestor.
fn ancestor_skeleton(ancestors: &[i64], lk: &Lookup, tol: &Tolerances) -> BTreeMap<i64, BTreeSet<i64>> {
    let mut adj: BTreeMap<i64, BTreeSet<i64>> = ancestors.iter().map(|&a| (a, BTreeSet::new())).collect();
    for (i, &u) in ancestors.iter().enumerate() {
        for &v in &ancestors[i + 1..] {
            let separated = ancestors
                .iter()
                .any(|&w| w != u && w != v && lk.gap(u, w, v) <= tol.sep_tol);
            if !separated {
                adj.get_mut(&u).unwrap().insert(v);
                adj.get_mut(&v).unwrap().insert(u);
            }
        }
    }
    adj
}

/// Maximal cliques of the ancestor skeleton, one per adjacent pair
/// (`{u, v}` plus common neighbours), deduplicated and sorted.
fn skeleton_cliques(adj: &BTreeMap<i64, BTreeSet<i64>>) -> Vec<BTreeSet<i64>> {
    let mut out = BTreeSet::new();
    for (&u, nu) in adj {
        for &v in nu.range(u + 1..) {
            let mut c: BTreeSet<i64> = nu.intersection(&adj[&v]).copied().collect();
            c.insert(u);
            c.insert(v);
            out.insert(c);
        }
    }
    out.into_iter().collect()
}

/// Partitions the observed vertices into blocks and pendant vertices.
///
/// Each leaf cluster is split by the non-cut test: its cut-type members
/// other than the designated articulation vertex become leaves of that
/// vertex, and its non-cut members, grouped by mutual non-separation, become
/// pendant blocks through it. Blocks holding two or more articulation points
/// come from cliques of the ancestor skeleton: a clique of three or more, or
/// any clique that keys an internal cluster, is a block containing that
/// cluster's vertices.
pub fn pale(
    clusters: &Clusters,
    catalog: &AncestorCatalog,
    ext: &DistanceMatrix,
    tol: &Tolerances,
    diagnostics: &mut Diagnostics,
) -> Result<PaleOutput> {
    let lk = Lookup::new(ext);
    let v_obs: Vec<i64> = ext.labels.iter().copied().filter(|&l| l > 0).collect();
    let mut out = PaleOutput {
        clusters: clusters.clone(),
        ..Default::default()
    };
    for &a in &catalog.a_obs {
        out.lambda.insert(a, a);
    }
    for (ci, l) in clusters.leaf.iter().enumerate() {
        let res = if l.l2.len() < 2 {
            finish_non_cut(l, BTreeSet::new())
        } else {
            match non_cut_test(l, ext, &v_obs, tol) {
                Ok(r) => r,
                Err(_) => non_cut_by_separation(l, ext, tol),
            }
        };
        let lam = res.l3.ok_or_else(|| NomadError::Pipeline {
            stage: "pale",
            message: format!("leaf cluster of {} has no cut-type member", l.l1),
        })?;
        out.clusters.leaf[ci].l3 = Some(lam);
        out.lambda.insert(l.l1, lam);
        for &c in res.c_cut.iter().filter(|&&c| c != lam) {
            out.e_leaf.push((lam, c));
        }
        // Pendant blocks: non-cut members not separated by the ancestor.
        let nc: Vec<i64> = res.c_noncut.iter().copied().collect();
        let mut uf = UnionFind::new(nc.len());
        for i in 0..nc.len() {
            for j in i + 1..nc.len() {
                if lk.gap(nc[i], l.l1, nc[j]) > tol.sep_tol {
                    uf.union(i, j);
                }
            }
        }
        for group in uf.groups() {
            if group.len() < 2 {
                diagnostics.warnings.push(format!(
                    "isolated non-cut vertex {} at ancestor {}; attached as a leaf",
                    nc[group[0]], l.l1
                ));
                out.e_leaf.push((lam, nc[group[0]]));
                continue;
            }
            let mut part: BTreeSet<i64> = group.iter().map(|&i| nc[i]).collect();
            part.insert(lam);
            out.parts.push(part);
        }
    }
    for a in catalog.ancestors() {
        if !out.lambda.contains_key(&a) {
            return Err(NomadError::Pipeline {
                stage: "pale",
                message: format!("hidden ancestor {a} has no leaf cluster"),
            });
        }
    }
    let ancestors: Vec<i64> = catalog.ancestors().into_iter().collect();
    let adj = ancestor_skeleton(&ancestors, &lk, tol);
    let cliques = skeleton_cliques(&adj);
    let mut keyed: BTreeMap<BTreeSet<i64>, usize> = BTreeMap::new();
    for (i, ic) in clusters.internal.iter().enumerate() {
        keyed.insert(ic.i1.clone(), i);
        if !cliques.contains(&ic.i1) {
            diagnostics.warnings.push(format!(
                "internal cluster key {:?} is not a clique of the ancestor skeleton",
                ic.i1
            ));
        }
    }
    let mut block_keys: BTreeSet<BTreeSet<i64>> = cliques.iter().filter(|c| c.len() >= 3).cloned().collect();
    block_keys.extend(keyed.keys().cloned());
    for key in &block_keys {
        let mut part: BTreeSet<i64> = key.iter().map(|a| out.lambda[a]).collect();
        if let Some(&i) = keyed.get(key) {
            part.extend(clusters.internal[i].i2.iter().copied());
            out.clusters.internal[i].i3 = key.iter().map(|a| out.lambda[a]).collect();
        }
        out.parts.push(part);
    }
    out.a_algo = out.lambda.values().copied().collect();
    out.parts.sort();
    Ok(out)
}

/// Articulation neighbours of ancestor `u` across bridges: ancestors adjacent
/// to `u` in the skeleton (no third ancestor separates them) that do not
/// share a recovered block with it.
pub fn non_block_neighbors(u: i64, catalog: &AncestorCatalog, pale_out: &PaleOutput, ext: &DistanceMatrix, tol: &Tolerances) -> BTreeSet<i64> {
    let lk = Lookup::new(ext);
    let ancestors: Vec<i64> = catalog.ancestors().into_iter().collect();
    let lu = pale_out.lambda[&u];
    ancestors
        .iter()
        .copied()
        .filter(|&v| v != u)
        .filter(|&v| {
            !ancestors
                .iter()
                .any(|&w| w != u && w != v && lk.gap(u, w, v) <= tol.sep_tol)
        })
        .filter(|&v| {
            let lv = pale_out.lambda[&v];
            !pale_out.parts.iter().any(|p| p.contains(&lu) && p.contains(&lv))
        })
        .collect()
}

/// Edges between articulation vertices and leaves: the leaf-cluster edges
/// plus one bridge `λ(u)–λ(v)` for every ancestor `u` and `v ∈ δ(u)`.
pub fn edge_set_ast(catalog: &AncestorCatalog, pale_out: &PaleOutput, ext: &DistanceMatrix, tol: &Tolerances) -> BTreeSet<(i64, i64)> {
    let norm = |a: i64, b: i64| (a.min(b), a.max(b));
    let mut edges: BTreeSet<(i64, i64)> = pale_out.e_leaf.iter().map(|&(a, b)| norm(a, b)).collect();
    for u in catalog.ancestors() {
        for v in non_block_neighbors(u, catalog, pale_out, ext, tol) {
            edges.insert(norm(pale_out.lambda[&u], pale_out.lambda[&v]));
        }
    }
    edges
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

/// Everything produced by [`run_nomad`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NomadOutput {
    pub ast: ArticulatedSetTree,
    /// A representative graph of the recovered equivalence class.
    pub graph: UndirectedGraph,
    pub catalog: AncestorCatalog,
    pub clusters: Clusters,
    pub diagnostics: Diagnostics,
}

fn stage_err(stage: &'static str) -> impl Fn(NomadError) -> NomadError {
    move |e| match e {
        NomadError::Pipeline { .. } => e,
        other => NomadError::Pipeline {
            stage,
            message: other.to_string(),
        },
    }
}

fn add_cycle(h: &mut UndirectedGraph, part: &BTreeSet<i64>) -> Result<()> {
    let vs: Vec<Vertex> = part.iter().map(|&v| v as Vertex).collect();
    for k in 0..vs.len() {
        let (u, v) = (vs[k], vs[(k + 1) % vs.len()]);
        if u != v {
            h.add_edge(u, v)?;
        }
    }
    Ok(())
}

/// Recovers the articulated set tree of the equivalence class from distances
/// between noisy observations (labels must be positive vertex ids).
pub fn run_nomad(dist: &DistanceMatrix, tol: &Tolerances) -> Result<NomadOutput> {
    validate_observed(dist).map_err(stage_err("input"))?;
    let vertices: VertexSet = dist.labels.iter().map(|&l| l as Vertex).collect();
    if dist.len() < 3 {
        // One or two variables: the only connected structure is trivial.
        let mut g = UndirectedGraph::with_vertices(vertices.iter().copied());
        let vs: Vec<Vertex> = vertices.iter().copied().collect();
        if vs.len() == 2 {
            g.add_edge(vs[0], vs[1])?;
        }
        let ast = build_ast(&g).map_err(stage_err("assemble"))?;
        return Ok(NomadOutput {
            ast,
            graph: g,
            catalog: AncestorCatalog::default(),
            clusters: Clusters::default(),
            diagnostics: Diagnostics::default(),
        });
    }
    let AncestorStage {
        catalog,
        extended,
        mut diagnostics,
    } = identify_ancestors(dist, tol).map_err(stage_err("identify_ancestors"))?;
    let mut h = UndirectedGraph::with_vertices(vertices.iter().copied());
    if catalog.ancestors().is_empty() {
        add_cycle(&mut h, &dist.labels.iter().copied().collect())?;
        let ast = build_ast(&h).map_err(stage_err("assemble"))?;
        return Ok(NomadOutput {
            ast,
            graph: h,
            catalog,
            clusters: Clusters::default(),
            diagnostics,
        });
    }
    let clock = Instant::now();
    let clusters = learn_clusters(&catalog, &extended, tol).map_err(stage_err("learn_clusters"))?;
    let pale_out = pale(&clusters, &catalog, &extended, tol, &mut diagnostics).map_err(stage_err("pale"))?;
    let edges = edge_set_ast(&catalog, &pale_out, &extended, tol);
    diagnostics
        .stage_ms
        .insert("partition".into(), clock.elapsed().as_secs_f64() * 1e3);
    for part in &pale_out.parts {
        add_cycle(&mut h, part).map_err(stage_err("assemble"))?;
    }
    for (u, v) in edges {
        if u != v && !h.has_edge(u as Vertex, v as Vertex) {
            h.add_edge(u as Vertex, v as Vertex).map_err(stage_err("assemble"))?;
        }
    }
    let ast = build_ast(&h).map_err(stage_err("assemble"))?;
    let got: BTreeSet<BTreeSet<i64>> = ast
        .block_parts()
        .into_iter()
        .map(|p| p.iter().map(|&v| v as i64).collect())
        .collect();
    let want: BTreeSet<BTreeSet<i64>> = pale_out.parts.iter().cloned().collect();
    if got != want {
        diagnostics
            .warnings
            .push("assembled blocks differ from the partition's parts".into());
    }
    Ok(NomadOutput {
        ast,
        graph: h,
        catalog,
        clusters: pale_out.clusters,
        diagnostics,
    })
}

/// Runs the pipeline on a data matrix (rows are samples) via the plug-in
/// distance estimates.
pub fn run_nomad_on_data(data: &DMatrix<f64>, tol: &Tolerances) -> Result<NomadOutput> {
    let dist = empirical_distances(data).map_err(stage_err("empirical_distances"))?;
    run_nomad(&dist, tol)
}
