//! Graph generators, trial orchestration, scoring and CSV output.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{NomadError, Result};
use crate::ggm::{empirical_distances, sample, synthesize_model, SynthesisOptions, WeightRange};
use crate::graph::{block_decomposition, equivalence_signature, same_equivalence_class, UndirectedGraph, Vertex, VertexSet};
use crate::nomad::{run_nomad, Tolerances};

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

fn graph(p: usize, edges: &[(Vertex, Vertex)]) -> UndirectedGraph {
    UndirectedGraph::from_edges(p, edges).expect("generator edges are valid")
}

/// Path `1 - 2 - … - p`.
pub fn chain(p: usize) -> UndirectedGraph {
    let edges: Vec<_> = (1..p).map(|i| (i, i + 1)).collect();
    graph(p, &edges)
}

/// Vertex 1 joined to every other vertex.
pub fn star(p: usize) -> UndirectedGraph {
    let edges: Vec<_> = (2..=p).map(|i| (1, i)).collect();
    graph(p, &edges)
}

/// Ten-vertex graph with families `{1,2,3}` and `{8,9,10}` joined through the
/// non-trivial block `{4,5,6,7}` (a 4-cycle with chord 4–6).
pub fn gsyn_standin() -> UndirectedGraph {
    graph(
        10,
        &[
            (1, 2),
            (2, 3),
            (2, 4),
            (4, 5),
            (5, 6),
            (6, 7),
            (7, 4),
            (4, 6),
            (7, 9),
            (8, 9),
            (9, 10),
        ],
    )
}

/// The 33-bus radial distribution feeder (main line 1–18, laterals 2–22,
/// 3–25 and 6–33) with its five standard tie lines 8–21, 9–15, 12–22, 18–33
/// and 25–29 closed.
pub fn ieee33_loops() -> UndirectedGraph {
    let mut edges: Vec<(Vertex, Vertex)> = (1..18).map(|i| (i, i + 1)).collect();
    edges.extend([(2, 19), (19, 20), (20, 21), (21, 22)]);
    edges.extend([(3, 23), (23, 24), (24, 25)]);
    edges.push((6, 26));
    edges.extend((26..33).map(|i| (i, i + 1)));
    edges.extend([(8, 21), (9, 15), (12, 22), (18, 33), (25, 29)]);
    graph(33, &edges)
}

/// Path `1 - … - 8` with vertex 9 adjacent to 4 and 5, forming one triangle.
pub fn chain_triangle() -> UndirectedGraph {
    let mut edges: Vec<(Vertex, Vertex)> = (1..8).map(|i| (i, i + 1)).collect();
    edges.extend([(4, 9), (5, 9)]);
    graph(9, &edges)
}

/// 24-vertex graph exercising every structural feature: non-trivial blocks
/// `{1,2,3,4}`, `{5,6,8,22}`, `{7,9,14,23,24}` and `{17,18,19}`; families
/// `{10,11,12,13}`, `{14,15,16}` and `{17,20,21}`; leaf-free cut vertices
/// `{4,6,7,8,9}`.
pub fn showcase() -> UndirectedGraph {
    showcase_with(2, 2, &mut ChaCha8Rng::seed_from_u64(0), false)
}

/// Random member of the showcase topology family: the interiors of the
/// blocks through 6–8 and 7–9–14 have 1–3 vertices each and every block
/// with four or more vertices is rewired at random (a random Hamiltonian
/// cycle plus random chords).
pub fn showcase_family(seed: u64) -> UndirectedGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b1 = rng.random_range(1..=3);
    let b2 = rng.random_range(1..=3);
    showcase_with(b1, b2, &mut rng, true)
}

fn showcase_with(b1: usize, b2: usize, rng: &mut ChaCha8Rng, rewire: bool) -> UndirectedGraph {
    // Labels 1..=21 are fixed; block interiors take 5 and then 22, 23, ...
    let mut next = 22;
    let mut interior1 = vec![5];
    for _ in 1..b1 {
        interior1.push(next);
        next += 1;
    }
    let mut interior2 = Vec::new();
    for _ in 0..b2 {
        interior2.push(next);
        next += 1;
    }
    let p = next - 1;
    let mut edges: Vec<(Vertex, Vertex)> = vec![
        (4, 10),
        (10, 6),
        (8, 7),
        (9, 17),
        (10, 11),
        (10, 12),
        (10, 13),
        (14, 15),
        (14, 16),
        (17, 20),
        (17, 21),
        (17, 18),
        (18, 19),
        (19, 17),
    ];
    let mut block_a = vec![1, 2, 3, 4];
    let mut block_b = vec![6, 8];
    block_b.extend(&interior1);
    let mut block_c = vec![7, 9, 14];
    block_c.extend(&interior2);
    if rewire {
        for b in [&mut block_a, &mut block_b, &mut block_c] {
            edges.extend(random_biconnected(b, rng));
        }
    } else {
        edges.extend([(1, 2), (2, 3), (3, 4), (4, 1), (1, 3)]);
        edges.extend([(5, 6), (6, 22), (22, 8), (8, 5), (5, 22)]);
        edges.extend([(7, 23), (23, 9), (9, 24), (24, 7), (14, 23), (14, 24)]);
    }
    graph(p, &edges)
}

/// Random biconnected wiring of the given vertices (at least three): a
/// shuffled Hamiltonian cycle plus each chord with probability 0.3.
fn random_biconnected(vs: &mut [Vertex], rng: &mut ChaCha8Rng) -> Vec<(Vertex, Vertex)> {
    vs.shuffle(rng);
    let n = vs.len();
    let mut edges: Vec<(Vertex, Vertex)> = (0..n).map(|i| (vs[i], vs[(i + 1) % n])).collect();
    for i in 0..n {
        for j in i + 2..n {
            if !(i == 0 && j == n - 1) && rng.random_bool(0.3) {
                edges.push((vs[i], vs[j]));
            }
        }
    }
    edges
}

/// Connected graph with exactly `blocks` non-trivial blocks on `p` vertices.
///
/// Blocks are 3- or 4-cycles (a 4-cycle gets a chord with probability ½),
/// each attached to the structure built so far either through a shared vertex
/// or through a bridge. The remaining vertices hang off as a random forest
/// and the labels are finally permuted at random.
pub fn random_block(p: usize, blocks: usize, seed: u64) -> Result<UndirectedGraph> {
    let min = if blocks == 0 { 1 } else { 2 * blocks + 1 };
    if p < min {
        return Err(NomadError::InvalidParameter(format!(
            "random_block needs at least {min} vertices for {blocks} blocks"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(Vertex, Vertex)> = Vec::new();
    let mut used = 0usize;
    for b in 0..blocks {
        let remaining_blocks = blocks - b - 1;
        let reserve = 2 * remaining_blocks;
        let share = b > 0 && rng.random_bool(0.5);
        let fresh_needed = |size: usize| if b == 0 { size } else if share { size - 1 } else { size };
        let mut size = if rng.random_bool(0.5) { 4 } else { 3 };
        if used + fresh_needed(size) + reserve > p {
            size = 3;
        }
        if used + fresh_needed(size) + reserve > p {
            // Fall back to sharing, which needs the fewest new vertices.
            size = 3;
        }
        let mut members = Vec::new();
        if b > 0 {
            let anchor = rng.random_range(1..=used);
            if share || used + 3 + reserve > p {
                members.push(anchor);
            } else {
                used += 1;
                edges.push((anchor, used));
                members.push(used);
            }
        }
        while members.len() < size {
            used += 1;
            members.push(used);
        }
        for i in 0..size {
            edges.push((members[i], members[(i + 1) % size]));
        }
        if size == 4 && rng.random_bool(0.5) {
            edges.push((members[0], members[2]));
        }
    }
    if used == 0 {
        used = 1;
    }
    while used < p {
        let anchor = rng.random_range(1..=used);
        used += 1;
        edges.push((anchor, used));
    }
    let mut perm: Vec<Vertex> = (1..=p).collect();
    perm.shuffle(&mut rng);
    let relabelled: Vec<(Vertex, Vertex)> = edges.iter().map(|&(u, v)| (perm[u - 1], perm[v - 1])).collect();
    let g = UndirectedGraph::from_edges(p, &relabelled)?;
    debug_assert_eq!(block_decomposition(&g)?.nontrivial_blocks.len(), blocks);
    Ok(g)
}

/// Random connected graph: a random recursive tree plus every other pair
/// as an edge with probability `extra`.
pub fn random_connected(p: usize, extra: f64, seed: u64) -> UndirectedGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = UndirectedGraph::with_vertices(1..=p);
    for v in 2..=p {
        let u = rng.random_range(1..v);
        g.add_edge(u, v).expect("valid");
    }
    for u in 1..=p {
        for v in u + 1..=p {
            if !g.has_edge(u, v) && rng.random_bool(extra) {
                g.add_edge(u, v).expect("valid");
            }
        }
    }
    g
}

fn parse_args(spec: &str) -> (String, Vec<usize>) {
    let s = spec.trim();
    let (name, rest) = match s.find(['(', ':']) {
        Some(i) => (&s[..i], &s[i..]),
        None => (s, ""),
    };
    let args = rest
        .split(|c: char| !c.is_ascii_digit())
        .filter(|t| !t.is_empty())
        .filter_map(|t| t.parse().ok())
        .collect();
    (name.to_string(), args)
}

/// Builds a graph from a generator id: `gsyn_standin`, `ieee33_loops`,
/// `chain(p)`, `star(p)`, `random_block(p, blocks)`, `chain_triangle`,
/// `showcase`, `showcase_family`, or `random_connected(p)`. Arguments may
/// also be written `chain:8`. Random generators use `seed`.
pub fn generate_graph(id: &str, seed: u64) -> Result<UndirectedGraph> {
    let (name, args) = parse_args(id);
    let arg = |i: usize| -> Result<usize> {
        args.get(i)
            .copied()
            .ok_or_else(|| NomadError::InvalidParameter(format!("generator `{id}` needs argument {}", i + 1)))
    };
    match name.as_str() {
        "gsyn_standin" => Ok(gsyn_standin()),
        "ieee33_loops" => Ok(ieee33_loops()),
        "chain" => Ok(chain(arg(0)?)),
        "star" => Ok(star(arg(0)?)),
        "chain_triangle" => Ok(chain_triangle()),
        "showcase" => Ok(showcase()),
        "showcase_family" => Ok(showcase_family(seed)),
        "random_block" => random_block(arg(0)?, arg(1)?, seed),
        "random_connected" => Ok(random_connected(arg(0)?, 0.25, seed)),
        _ => Err(NomadError::UnknownGenerator(id.to_string())),
    }
}

// ---------------------------------------------------------------------------
// Configuration and records
// ---------------------------------------------------------------------------

/// Population distances or a finite sample size; written as
/// `"population"` or the number of samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleSize {
    Population,
    Finite(usize),
}

impl Serialize for SampleSize {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SampleSize::Population => s.serialize_str("population"),
            SampleSize::Finite(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for SampleSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Name(String),
            Count(usize),
        }
        match Repr::deserialize(d)? {
            Repr::Count(n) => Ok(SampleSize::Finite(n)),
            Repr::Name(s) if s == "population" => Ok(SampleSize::Population),
            Repr::Name(s) => Err(D::Error::custom(format!("expected \"population\" or a count, got `{s}`"))),
        }
    }
}

/// Where a trial's ground-truth graph comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum GraphSource {
    /// Generator id understood by [`generate_graph`].
    Named(String),
    /// A fixed graph (e.g. read from a file).
    Fixed(UndirectedGraph),
}

impl GraphSource {
    pub fn graph(&self, seed: u64) -> Result<UndirectedGraph> {
        match self {
            GraphSource::Named(id) => generate_graph(id, seed),
            GraphSource::Fixed(g) => Ok(g.clone()),
        }
    }
}

/// A sweep of independent trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub graph_source: GraphSource,
    /// Noise entries are uniform on `[0, noise_max]`.
    pub noise_max: f64,
    pub n_samples: SampleSize,
    pub trials: usize,
    pub seed: u64,
    /// Test thresholds; `None` selects the population tolerance for
    /// population runs and `ξ = ζ/4` from the measured margins otherwise.
    pub tolerances: Option<Tolerances>,
    pub weights: WeightRange,
    pub synthesis: SynthesisOptions,
    /// Record wall-clock runtimes (otherwise `runtime_ms` is 0 so that
    /// output is reproducible byte for byte).
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn new(graph_source: GraphSource, noise_max: f64, n_samples: SampleSize, trials: usize, seed: u64) -> Self {
        ExperimentConfig {
            graph_source,
            noise_max,
            n_samples,
            trials,
            seed,
            tolerances: None,
            weights: WeightRange::default(),
            synthesis: SynthesisOptions::default(),
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(NomadError::InvalidParameter("trials must be at least 1".into()));
        }
        if !(self.noise_max >= 0.0) {
            return Err(NomadError::InvalidParameter("noise_max must be nonnegative".into()));
        }
        if let SampleSize::Finite(n) = self.n_samples {
            if n < 2 {
                return Err(NomadError::InvalidParameter("need at least 2 samples".into()));
            }
        }
        if let Some(t) = &self.tolerances {
            t.validate()?;
        }
        Ok(())
    }
}

/// One row of the trials CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial_seed: u64,
    pub noise_max: f64,
    pub n_samples: SampleSize,
    /// 1 when the output lies in the true equivalence class, else 0.
    pub equivalence_pass: u8,
    pub families_recovered: f64,
    pub noncut_recovered: f64,
    pub k_recovered: f64,
    pub runtime_ms: f64,
}

/// A record together with the failure message of a trial that errored.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    pub record: TrialRecord,
    pub error: Option<String>,
}

fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        1.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

/// Scores a recovered structure (as a representative graph) against the
/// truth: equivalence verdict plus Jaccard agreement of families, non-cut
/// unions and `K` sets.
pub fn score_graph(truth: &UndirectedGraph, recovered: &UndirectedGraph) -> Result<(u8, f64, f64, f64)> {
    if truth.vertex_set() != recovered.vertex_set() {
        return Err(NomadError::LabelMismatch);
    }
    if !recovered.is_connected() {
        return Ok((0, 0.0, 0.0, 0.0));
    }
    let st = equivalence_signature(truth)?;
    let sr = equivalence_signature(recovered)?;
    let pass = same_equivalence_class(truth, recovered)? as u8;
    Ok((
        pass,
        jaccard(&st.families, &sr.families),
        jaccard(&st.noncut_union, &sr.noncut_union),
        jaccard(&st.k_set, &sr.k_set),
    ))
}

/// Scores an externally produced structure (e.g. another estimator's
/// adjacency) with the same metrics as internal trials.
pub fn score_external(adjacency: &UndirectedGraph, g: &UndirectedGraph) -> Result<TrialRecord> {
    let (pass, f, nc, k) = score_graph(g, adjacency)?;
    Ok(TrialRecord {
        trial_seed: 0,
        noise_max: 0.0,
        n_samples: SampleSize::Population,
        equivalence_pass: pass,
        families_recovered: f,
        noncut_recovered: nc,
        k_recovered: k,
        runtime_ms: 0.0,
    })
}

/// Seed of trial `t` in a sweep.
pub fn trial_seed(cfg: &ExperimentConfig, t: usize) -> u64 {
    cfg.seed.wrapping_add(t as u64)
}

fn run_trial_inner(cfg: &ExperimentConfig, seed: u64) -> Result<(u8, f64, f64, f64)> {
    let g = cfg.graph_source.graph(seed)?;
    let (model, margins) = synthesize_model(&g, cfg.weights, cfg.noise_max, seed, &cfg.synthesis)?;
    let (dist, default_tol) = match cfg.n_samples {
        SampleSize::Population => (model.observed_distances(), Tolerances::population()),
        SampleSize::Finite(n) => {
            let data = sample(&model.observed_covariance(), n, seed ^ 0x5851_f42d_4c95_7f2d)?;
            (empirical_distances(&data)?, Tolerances::from_margins(&margins))
        }
    };
    let tol = cfg.tolerances.unwrap_or(default_tol);
    let out = run_nomad(&dist, &tol)?;
    score_graph(&g, &out.graph)
}

/// Runs a single trial; failures are captured in the outcome.
pub fn run_trial(cfg: &ExperimentConfig, seed: u64) -> TrialOutcome {
    let clock = Instant::now();
    let res = run_trial_inner(cfg, seed);
    let runtime_ms = if cfg.timing {
        clock.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };
    let (scores, error) = match res {
        Ok(s) => (s, None),
        Err(e) => ((0, 0.0, 0.0, 0.0), Some(e.to_string())),
    };
    TrialOutcome {
        record: TrialRecord {
            trial_seed: seed,
            noise_max: cfg.noise_max,
            n_samples: cfg.n_samples,
            equivalence_pass: scores.0,
            families_recovered: scores.1,
            noncut_recovered: scores.2,
            k_recovered: scores.3,
            runtime_ms,
        },
        error,
    }
}

/// Runs every trial of a sweep in parallel; results are in trial order.
pub fn run_sweep_outcomes(cfg: &ExperimentConfig) -> Result<Vec<TrialOutcome>> {
    cfg.validate()?;
    Ok((0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, trial_seed(cfg, t)))
        .collect())
}

/// Runs every trial of a sweep; results are in trial order.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    Ok(run_sweep_outcomes(cfg)?.into_iter().map(|o| o.record).collect())
}

/// Writes trial records as CSV with a header row.
pub fn write_trials_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// CSV text of trial records.
pub fn trials_csv_string(records: &[TrialRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_trials_csv(records, &mut buf)?;
    String::from_utf8(buf).map_err(|e| NomadError::Io(e.to_string()))
}

/// Fraction of passing trials.
pub fn pass_rate(records: &[TrialRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().map(|r| r.equivalence_pass as f64).sum::<f64>() / records.len() as f64
}

/// Vertices of `g` in non-trivial blocks that are not cut vertices.
pub fn true_noncut(g: &UndirectedGraph) -> Result<VertexSet> {
    Ok(block_decomposition(g)?.noncut_union())
}
