//! Gaussian graphical models: precision synthesis, diagonal noise,
//! information distances (population, joint-graph and empirical), sampling,
//! model margins and the finite-sample bound.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NomadError, Result};
use crate::graph::{copy_of, joint_graph, TripleClass, TripleClassifier, UndirectedGraph, VertexSet};
use crate::nomad::{triples, TripleTable};

/// Distance assigned to a pair with zero correlation instead of `+∞`.
pub const ZERO_CORRELATION_DISTANCE: f64 = 1e12;

/// Symmetric positive definite precision matrix; row `i - 1` is vertex `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionMatrix {
    #[serde(with = "crate::io::row_major")]
    pub entries: DMatrix<f64>,
}

impl PrecisionMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Covariance `K^{-1}`.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        invert_spd(&self.entries)
    }
}

/// Nonnegative diagonal noise variances `D_11 … D_pp`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub diagonal: Vec<f64>,
}

impl NoiseSpec {
    pub fn zeros(p: usize) -> Self {
        NoiseSpec {
            diagonal: vec![0.0; p],
        }
    }

    /// Entries drawn independently and uniformly from `[0, max]`.
    pub fn uniform(p: usize, max: f64, rng: &mut impl Rng) -> Self {
        NoiseSpec {
            diagonal: (0..p)
                .map(|_| if max > 0.0 { rng.random_range(0.0..=max) } else { 0.0 })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (index, &value) in self.diagonal.iter().enumerate() {
            if !(value >= 0.0) {
                return Err(NomadError::NegativeNoise { index, value });
            }
        }
        Ok(())
    }
}

/// Symmetric matrix of information distances over labelled variables.
/// Positive labels are observed vertex ids; negative labels are hidden
/// ancestors minted by the recovery pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub labels: Vec<i64>,
    #[serde(with = "crate::io::row_major")]
    pub values: DMatrix<f64>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Position of a label.
    pub fn index_of(&self, label: i64) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    /// Distance between two labels.
    pub fn get(&self, a: i64, b: i64) -> f64 {
        let i = self.index_of(a).expect("unknown label");
        let j = self.index_of(b).expect("unknown label");
        self.values[(i, j)]
    }

    /// Restriction to the given labels, in the given order.
    pub fn restrict(&self, labels: &[i64]) -> DistanceMatrix {
        let idx: Vec<usize> = labels.iter().map(|&l| self.index_of(l).expect("unknown label")).collect();
        let values = DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.values[(idx[a], idx[b])]);
        DistanceMatrix {
            labels: labels.to_vec(),
            values,
        }
    }
}

/// Separation and ancestor-consistency margins of a model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMargins {
    pub gamma: f64,
    pub zeta: f64,
}

/// Magnitude range of off-diagonal precision entries; signs are random.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightRange {
    pub lo: f64,
    pub hi: f64,
}

impl Default for WeightRange {
    fn default() -> Self {
        WeightRange { lo: 0.2, hi: 0.5 }
    }
}

/// Controls the rejection loop of [`synthesize_precision`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    /// Added to each row's absolute off-diagonal sum to form the diagonal.
    pub diagonal_margin: f64,
    pub gamma_floor: f64,
    pub zeta_floor: f64,
    pub max_attempts: usize,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            diagonal_margin: 0.1,
            gamma_floor: 0.01,
            zeta_floor: 0.01,
            max_attempts: 200,
        }
    }
}

/// A graph together with its precision matrix, covariance and noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GgmModel {
    pub graph: UndirectedGraph,
    pub precision: PrecisionMatrix,
    #[serde(with = "crate::io::row_major")]
    pub sigma: DMatrix<f64>,
    pub noise: NoiseSpec,
}

impl GgmModel {
    pub fn new(graph: UndirectedGraph, precision: PrecisionMatrix, noise: NoiseSpec) -> Result<Self> {
        let p = graph.require_dense_labels()?;
        if precision.dim() != p {
            return Err(NomadError::DimensionMismatch {
                expected: p,
                got: precision.dim(),
            });
        }
        if noise.diagonal.len() != p {
            return Err(NomadError::DimensionMismatch {
                expected: p,
                got: noise.diagonal.len(),
            });
        }
        noise.validate()?;
        let sigma = precision.covariance()?;
        Ok(GgmModel {
            graph,
            precision,
            sigma,
            noise,
        })
    }

    pub fn p(&self) -> usize {
        self.sigma.nrows()
    }

    /// `Σ° = Σ + D`.
    pub fn observed_covariance(&self) -> DMatrix<f64> {
        noisy_covariance(&self.sigma, &self.noise).expect("validated at construction")
    }

    /// Population distances between the noisy observations, labelled `1..=p`.
    pub fn observed_distances(&self) -> DistanceMatrix {
        information_distances(&self.observed_covariance()).expect("Σ + D is positive definite")
    }

    /// Population distances on the joint graph (`i` original, `i + p` copy).
    pub fn joint_distances(&self) -> DistanceMatrix {
        joint_distances_from_sigma(&self.sigma, &self.noise)
    }
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn invert_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = m.clone().cholesky().ok_or(NomadError::NotPositiveDefinite)?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Random precision matrix with the exact sparsity of `g`.
///
/// Off-diagonal entries on edges have magnitude uniform in `weights` and a
/// random sign; each diagonal entry is its row's absolute off-diagonal sum
/// plus `diagonal_margin`, which makes the matrix positive definite. Draws are
/// repeated until the noiseless model's margins reach the configured floors.
pub fn synthesize_precision(
    g: &UndirectedGraph,
    weights: WeightRange,
    seed: u64,
    opts: &SynthesisOptions,
) -> Result<PrecisionMatrix> {
    Ok(synthesize_model(g, weights, 0.0, seed, opts)?.0.precision)
}

/// Random model on `g` with noise entries uniform in `[0, noise_max]`.
///
/// Precision weights are drawn as in [`synthesize_precision`]; precision and
/// noise are redrawn together until the noisy model's margins reach the
/// configured floors. Returns the accepted model and its margins.
pub fn synthesize_model(
    g: &UndirectedGraph,
    weights: WeightRange,
    noise_max: f64,
    seed: u64,
    opts: &SynthesisOptions,
) -> Result<(GgmModel, ModelMargins)> {
    let p = g.require_dense_labels()?;
    g.require_connected()?;
    if !(weights.lo > 0.0 && weights.hi >= weights.lo) {
        return Err(NomadError::InvalidParameter(format!(
            "weight range [{}, {}] must be positive",
            weights.lo, weights.hi
        )));
    }
    if !(noise_max >= 0.0) {
        return Err(NomadError::InvalidParameter(format!("noise_max {noise_max} must be nonnegative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = (0.0, "gamma", opts.gamma_floor);
    for _ in 0..opts.max_attempts.max(1) {
        let k = draw_precision(g, p, weights, opts.diagonal_margin, &mut rng);
        let noise = NoiseSpec::uniform(p, noise_max, &mut rng);
        let model = GgmModel::new(g.clone(), PrecisionMatrix { entries: k }, noise)?;
        let margins = measure_margins(g, &model.joint_distances())?;
        if margins.gamma < opts.gamma_floor {
            last = (margins.gamma, "gamma", opts.gamma_floor);
            continue;
        }
        if margins.zeta < opts.zeta_floor {
            last = (margins.zeta, "zeta", opts.zeta_floor);
            continue;
        }
        return Ok((model, margins));
    }
    Err(NomadError::MarginRejected {
        attempts: opts.max_attempts,
        margin: last.1,
        value: last.0,
        floor: last.2,
    })
}

fn draw_precision(g: &UndirectedGraph, p: usize, weights: WeightRange, margin: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(p, p);
    for (u, v) in g.edges() {
        let mag = if weights.hi > weights.lo {
            rng.random_range(weights.lo..weights.hi)
        } else {
            weights.lo
        };
        let w = if rng.random_bool(0.5) { mag } else { -mag };
        k[(u - 1, v - 1)] = w;
        k[(v - 1, u - 1)] = w;
    }
    for i in 0..p {
        let s: f64 = (0..p).filter(|&j| j != i).map(|j| k[(i, j)].abs()).sum();
        k[(i, i)] = s + margin;
    }
    k
}

/// Distance of a correlation coefficient, `-log|ρ|`, with the zero sentinel.
pub fn correlation_distance(rho: f64) -> f64 {
    let a = rho.abs();
    if a == 0.0 {
        ZERO_CORRELATION_DISTANCE
    } else {
        (-a.ln()).max(0.0)
    }
}

/// Information distances `-log|Σ_ij / sqrt(Σ_ii Σ_jj)|`, labelled `1..=p`.
pub fn information_distances(sigma: &DMatrix<f64>) -> Result<DistanceMatrix> {
    if sigma.nrows() != sigma.ncols() {
        return Err(NomadError::DimensionMismatch {
            expected: sigma.nrows(),
            got: sigma.ncols(),
        });
    }
    if sigma.clone().cholesky().is_none() {
        return Err(NomadError::NotPositiveDefinite);
    }
    Ok(distances_from_moments(sigma))
}

fn distances_from_moments(sigma: &DMatrix<f64>) -> DistanceMatrix {
    let p = sigma.nrows();
    let values = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            0.0
        } else {
            correlation_distance(sigma[(i, j)] / (sigma[(i, i)] * sigma[(j, j)]).sqrt())
        }
    });
    DistanceMatrix {
        labels: (1..=p as i64).collect(),
        values,
    }
}

/// `Σ° = Σ + diag(D)`.
pub fn noisy_covariance(sigma: &DMatrix<f64>, d: &NoiseSpec) -> Result<DMatrix<f64>> {
    if d.diagonal.len() != sigma.nrows() {
        return Err(NomadError::DimensionMismatch {
            expected: sigma.nrows(),
            got: d.diagonal.len(),
        });
    }
    d.validate()?;
    let mut out = sigma.clone();
    for (i, &v) in d.diagonal.iter().enumerate() {
        out[(i, i)] += v;
    }
    Ok(out)
}

/// Population distances on the joint graph of a model.
pub fn joint_distances(g: &UndirectedGraph, k: &PrecisionMatrix, d: &NoiseSpec) -> Result<DistanceMatrix> {
    let model = GgmModel::new(g.clone(), k.clone(), d.clone())?;
    Ok(model.joint_distances())
}

/// Joint-graph distances from a covariance and noise: labels `1..=p` are the
/// original variables and `p+1..=2p` their noisy copies.
pub fn joint_distances_from_sigma(sigma: &DMatrix<f64>, d: &NoiseSpec) -> DistanceMatrix {
    let p = sigma.nrows();
    let var = |i: usize| -> f64 {
        if i < p {
            sigma[(i, i)]
        } else {
            sigma[(i - p, i - p)] + d.diagonal[i - p]
        }
    };
    // Noise is independent of everything else, so it only enters variances.
    let cov = |i: usize, j: usize| -> f64 {
        let (a, b) = (i % p, j % p);
        sigma[(a, b)]
    };
    let values = DMatrix::from_fn(2 * p, 2 * p, |i, j| {
        if i == j {
            0.0
        } else {
            correlation_distance(cov(i, j) / (var(i) * var(j)).sqrt())
        }
    });
    DistanceMatrix {
        labels: (1..=2 * p as i64).collect(),
        values,
    }
}

/// `n` i.i.d. rows from `N(0, Σ°)`, deterministic under `seed`.
pub fn sample(sigma_o: &DMatrix<f64>, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let chol = sigma_o.clone().cholesky().ok_or(NomadError::NotPositiveDefinite)?;
    let l = chol.l();
    let p = sigma_o.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DMatrix::from_fn(p, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok((l * z).transpose())
}

/// Uncentred empirical covariance `(1/n) Σ y yᵀ`.
pub fn empirical_covariance(data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = data.nrows();
    if n < 2 {
        return Err(NomadError::InvalidParameter(format!("need at least 2 rows, got {n}")));
    }
    let s = data.transpose() * data / n as f64;
    for i in 0..s.nrows() {
        if !(s[(i, i)] > 0.0) {
            return Err(NomadError::ZeroVariance(i));
        }
    }
    Ok(s)
}

/// Plug-in distances from the uncentred empirical covariance of `data`.
pub fn empirical_distances(data: &DMatrix<f64>) -> Result<DistanceMatrix> {
    Ok(distances_from_moments(&empirical_covariance(data)?))
}

/// Plug-in distances from a given moment matrix (no positive-definiteness
/// requirement, matching the empirical estimator).
pub fn distances_from_covariance(sigma_hat: &DMatrix<f64>) -> DistanceMatrix {
    distances_from_moments(sigma_hat)
}

/// Outcome of the additivity check on a joint-graph distance matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdditivityReport {
    /// Largest `|d_ik + d_kj - d_ij|` over triples where `k` separates `i`, `j`.
    pub max_separated_error: f64,
    /// Smallest such gap over triples where `k` does not separate `i`, `j`.
    pub min_nonseparated_gap: f64,
    pub separated_triples: usize,
    pub nonseparated_triples: usize,
}

/// Scans every ordered triple `(i, j; k)` of the joint graph. Triples that
/// contain a vertex together with its noiseless copy are skipped: the two are
/// the same random variable.
pub fn additivity_report(g: &UndirectedGraph, joint: &DistanceMatrix) -> Result<AdditivityReport> {
    let p = g.require_dense_labels()?;
    let gj = joint_graph(g)?;
    if joint.len() != 2 * p {
        return Err(NomadError::DimensionMismatch {
            expected: 2 * p,
            got: joint.len(),
        });
    }
    let n = 2 * p;
    let d = &joint.values;
    let coincident = |a: usize, b: usize| a % p == b % p && d[(a, b)] == 0.0;
    let mut report = AdditivityReport {
        max_separated_error: 0.0,
        min_nonseparated_gap: f64::INFINITY,
        separated_triples: 0,
        nonseparated_triples: 0,
    };
    for k in 0..n {
        // A noiseless copy is the same variable as its original, so it
        // separates whatever the original separates.
        let sep = if k >= p && d[(k, k - p)] == 0.0 { k - p } else { k };
        let comp = gj.components_without(&VertexSet::from([sep + 1]));
        for i in 0..n {
            for j in i + 1..n {
                if i == k || j == k || coincident(i, j) || coincident(i, k) || coincident(j, k) {
                    continue;
                }
                let gap = d[(i, k)] + d[(k, j)] - d[(i, j)];
                if i == sep || j == sep || comp[&(i + 1)] != comp[&(j + 1)] {
                    report.separated_triples += 1;
                    report.max_separated_error = report.max_separated_error.max(gap.abs());
                } else {
                    report.nonseparated_triples += 1;
                    report.min_nonseparated_gap = report.min_nonseparated_gap.min(gap.abs());
                }
            }
        }
    }
    Ok(report)
}

/// Measured margins of a model from its joint-graph distances.
///
/// `gamma` is the smallest additivity gap over non-separated joint triples.
/// `zeta` is the smallest TIA score over ordered pairs of distinct observed
/// triples whose TIA identities are not forced by separation: pairs that are
/// neither star triplets with a common ancestor nor non-star triples with the
/// same block gates (see [`crate::graph::block_gates`]). It is the amount by which every
/// pair that can fail the TIA test actually fails it.
pub fn measure_margins(g: &UndirectedGraph, joint: &DistanceMatrix) -> Result<ModelMargins> {
    let p = g.require_dense_labels()?;
    let add = additivity_report(g, joint)?;
    let observed: Vec<i64> = (1..=p).map(|v| copy_of(v, p) as i64).collect();
    let obs = joint.restrict(&observed);
    let zeta = zeta_margin(g, &obs)?;
    Ok(ModelMargins {
        gamma: add.min_nonseparated_gap,
        zeta,
    })
}

/// Smallest TIA score over ordered pairs of observed triples (labels `1..=p`
/// in `obs`) that neither share a star ancestor nor share block gates in `g`.
pub fn zeta_margin(g: &UndirectedGraph, obs: &DistanceMatrix) -> Result<f64> {
    let p = g.require_dense_labels()?;
    if obs.len() != p {
        return Err(NomadError::DimensionMismatch {
            expected: p,
            got: obs.len(),
        });
    }
    let ts = triples(p);
    let classifier = TripleClassifier::new(g)?;
    let class: Vec<TripleClass> = ts.iter().map(|t| classifier.classify([t[0] + 1, t[1] + 1, t[2] + 1])).collect();
    let table = TripleTable::new(&obs.values, ts);
    let zeta = (0..table.len())
        .into_par_iter()
        .map(|a| {
            let mut best = f64::INFINITY;
            for b in 0..table.len() {
                if a == b || class[a] == class[b] {
                    continue;
                }
                best = best.min(table.tia_score_below(a, b, best));
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(zeta)
}

/// Sample size sufficient for recovery with probability `1 - tau`:
/// `⌈c / κ · max(log(p²/τ), log(1/κ))⌉` with
/// `κ = log((16 + ρ²ε²) / (16 - ρ²ε²))`.
pub fn sample_bound(rho_min: f64, eps_d: f64, p: usize, tau: f64, c: f64) -> Result<u64> {
    if !(rho_min > 0.0 && rho_min <= 1.0) {
        return Err(NomadError::InvalidParameter(format!("rho_min {rho_min} not in (0, 1]")));
    }
    if !(eps_d > 0.0) || !(tau > 0.0 && tau <= 1.0) || !(c > 0.0) || p == 0 {
        return Err(NomadError::InvalidParameter(
            "eps_d > 0, 0 < tau <= 1, c > 0 and p >= 1 required".into(),
        ));
    }
    let x = (rho_min * eps_d).powi(2);
    if x >= 16.0 {
        return Err(NomadError::InvalidParameter("rho_min * eps_d must be below 4".into()));
    }
    let kappa = ((16.0 + x) / (16.0 - x)).ln();
    let pf = p as f64;
    let bound = c / kappa * ((pf * pf / tau).ln()).max((1.0 / kappa).ln());
    Ok(bound.ceil() as u64)
}

/// Column vector helper used by tests and the identifiability module.
pub fn diag(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(values))
}
