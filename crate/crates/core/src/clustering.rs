//! Lloyd k-means under squared Euclidean distance or cosine dissimilarity
//! (spherical k-means), with elbow and silhouette diagnostics.

use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EsgError, Result};
use crate::weak_label::{read_embeddings, write_embeddings, Embeddings};

pub const DEFAULT_K: usize = 6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Cosine,
}

impl std::str::FromStr for Metric {
    type Err = EsgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            _ => Err(EsgError::Validation(format!("unknown metric {s:?} (euclidean|cosine)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// k distinct input points chosen uniformly.
    #[default]
    RandomPoints,
    PlusPlus,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub k: usize,
    pub metric: Metric,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop when the relative objective improvement falls below this.
    pub tol: f64,
    /// Restarts; when there are at most this many k-subsets of the input,
    /// every subset is tried instead of sampling.
    pub n_init: usize,
    pub init: Init,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { k: DEFAULT_K, metric: Metric::Euclidean, seed: 0, max_iter: 100, tol: 1e-4, n_init: 10, init: Init::RandomPoints }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub metric: Metric,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances, or total cosine dissimilarity.
    pub sse: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Objective after every iteration of the winning restart.
    #[serde(skip)]
    pub history: Vec<f64>,
}

impl ClusterModel {
    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    /// Nearest centroid of each point.
    pub fn assign(&self, points: &[Vec<f64>]) -> Result<Vec<usize>> {
        let prepared = prepare(points, self.metric)?;
        if let Some(p) = prepared.iter().find(|p| p.len() != self.dim()) {
            return Err(EsgError::DimensionMismatch { expected: self.dim(), got: p.len() });
        }
        Ok(prepared.iter().map(|p| nearest(p, &self.centroids, self.metric).0).collect())
    }
}

fn dissimilarity(a: &[f64], b: &[f64], metric: Metric) -> f64 {
    match metric {
        Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
        Metric::Cosine => 1.0 - a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>(),
    }
}

/// Index and dissimilarity of the closest centroid; ties go to the lowest index.
fn nearest(p: &[f64], centroids: &[Vec<f64>], metric: Metric) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = dissimilarity(p, c, metric);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn normalize(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 0.0 && n.is_finite()).then(|| v.iter().map(|x| x / n).collect())
}

fn prepare(points: &[Vec<f64>], metric: Metric) -> Result<Vec<Vec<f64>>> {
    if points.is_empty() {
        return Err(EsgError::Validation("no points to cluster".into()));
    }
    let dim = points[0].len();
    if dim == 0 {
        return Err(EsgError::Validation("points have dimension 0".into()));
    }
    for p in points {
        if p.len() != dim {
            return Err(EsgError::DimensionMismatch { expected: dim, got: p.len() });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(EsgError::Validation("non-finite coordinate".into()));
        }
    }
    match metric {
        Metric::Euclidean => Ok(points.to_vec()),
        Metric::Cosine => points
            .iter()
            .map(|p| normalize(p).ok_or_else(|| EsgError::Degenerate("zero vector under cosine metric".into())))
            .collect(),
    }
}

struct Run {
    centroids: Vec<Vec<f64>>,
    assignments: Vec<usize>,
    objective: f64,
    iterations: usize,
    history: Vec<f64>,
}

fn objective(points: &[Vec<f64>], assignments: &[usize], centroids: &[Vec<f64>], metric: Metric) -> f64 {
    points.iter().zip(assignments).map(|(p, &a)| dissimilarity(p, &centroids[a], metric)).sum()
}

/// Gives every empty cluster the point farthest from its centroid, taken
/// from a cluster that keeps at least one member.
fn repair_empty(points: &[Vec<f64>], assignments: &mut [usize], centroids: &mut [Vec<f64>], metric: Metric) {
    let k = centroids.len();
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    for j in 0..k {
        if sizes[j] > 0 {
            continue;
        }
        let mut far: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            let a = assignments[i];
            if sizes[a] < 2 {
                continue;
            }
            let d = dissimilarity(p, &centroids[a], metric);
            if far.is_none_or(|(_, best)| d > best) {
                far = Some((i, d));
            }
        }
        let (i, _) = far.expect("k <= n leaves a cluster with two members");
        sizes[assignments[i]] -= 1;
        assignments[i] = j;
        sizes[j] = 1;
        centroids[j] = points[i].clone();
    }
}

fn update(points: &[Vec<f64>], assignments: &[usize], centroids: &mut [Vec<f64>], metric: Metric) {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; centroids.len()];
    let mut counts = vec![0usize; centroids.len()];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p) {
            *s += x;
        }
    }
    for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
        if n == 0 {
            continue;
        }
        match metric {
            Metric::Euclidean => *c = s.iter().map(|x| x / n as f64).collect(),
            // A zero mean leaves every unit centroid equally good; keep the old one.
            Metric::Cosine => {
                if let Some(u) = normalize(&s) {
                    *c = u;
                }
            }
        }
    }
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, cfg: &KMeansConfig) -> Run {
    let mut assignments: Vec<usize> = Vec::new();
    let mut history: Vec<f64> = Vec::new();
    let mut iterations = 0;
    for iter in 1..=cfg.max_iter.max(1) {
        iterations = iter;
        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids, cfg.metric).0).collect();
        repair_empty(points, &mut next, &mut centroids, cfg.metric);
        update(points, &next, &mut centroids, cfg.metric);
        let j = objective(points, &next, &centroids, cfg.metric);
        let stable = next == assignments;
        assignments = next;
        let prev = history.last().copied();
        history.push(j);
        if stable {
            break;
        }
        if let Some(prev) = prev {
            if prev - j < cfg.tol * prev {
                break;
            }
        }
    }
    let objective = *history.last().expect("at least one iteration");
    Run { centroids, assignments, objective, iterations, history }
}

fn binomial(n: usize, k: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// All k-subsets of `0..n` in lexicographic order.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[pos] += 1;
        for i in pos + 1..k {
            idx[i] = idx[i - 1] + 1;
        }
    }
}

fn plus_plus(points: &[Vec<f64>], k: usize, metric: Metric, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    while centroids.len() < k {
        let d: Vec<f64> = points.iter().map(|p| nearest(p, &centroids, metric).1.max(0.0)).collect();
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            d.iter().position(|&w| {
                r -= w;
                r < 0.0
            })
            .unwrap_or(points.len() - 1)
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].clone());
    }
    centroids
}

/// Best of several Lloyd runs. Returns the model and each point's cluster.
pub fn kmeans(points: &[Vec<f64>], cfg: &KMeansConfig) -> Result<(ClusterModel, Vec<usize>)> {
    let prepared = prepare(points, cfg.metric)?;
    let n = prepared.len();
    if cfg.k == 0 || cfg.k > n {
        return Err(EsgError::Validation(format!("k = {} must be in 1..={n}", cfg.k)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let restarts = cfg.n_init.max(1);
    let inits: Vec<Vec<Vec<f64>>> = match cfg.init {
        Init::RandomPoints => {
            let picks: Vec<Vec<usize>> = match binomial(n, cfg.k) {
                Some(c) if c <= restarts => subsets(n, cfg.k),
                _ => (0..restarts).map(|_| sample(&mut rng, n, cfg.k).into_vec()).collect(),
            };
            picks.iter().map(|idx| idx.iter().map(|&i| prepared[i].clone()).collect()).collect()
        }
        Init::PlusPlus => (0..restarts).map(|_| plus_plus(&prepared, cfg.k, cfg.metric, &mut rng)).collect(),
    };
    let mut best: Option<Run> = None;
    for init in inits {
        let run = lloyd(&prepared, init, cfg);
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    let run = best.expect("at least one restart");
    let model = ClusterModel {
        k: cfg.k,
        metric: cfg.metric,
        centroids: run.centroids,
        sse: run.objective,
        iterations: run.iterations,
        seed: cfg.seed,
        history: run.history,
    };
    Ok((model, run.assignments))
}

/// Objective for every k in `ks`, each from [`kmeans`] with the same seed.
pub fn elbow_scan(points: &[Vec<f64>], ks: std::ops::RangeInclusive<usize>, cfg: &KMeansConfig) -> Result<Vec<(usize, f64)>> {
    if *ks.start() < 2 || *ks.end() > points.len() || ks.is_empty() {
        return Err(EsgError::Validation(format!("k range {ks:?} must lie within 2..={}", points.len())));
    }
    ks.map(|k| kmeans(points, &KMeansConfig { k, ..*cfg }).map(|(m, _)| (k, m.sse))).collect()
}

fn distance(a: &[f64], b: &[f64], metric: Metric) -> f64 {
    match metric {
        Metric::Euclidean => dissimilarity(a, b, metric).sqrt(),
        Metric::Cosine => dissimilarity(a, b, metric).max(0.0),
    }
}

/// Mean silhouette coefficient. Members of singleton clusters score 0.
pub fn silhouette(points: &[Vec<f64>], assignments: &[usize], metric: Metric) -> Result<f64> {
    let prepared = prepare(points, metric)?;
    if assignments.len() != prepared.len() {
        return Err(EsgError::DimensionMismatch { expected: prepared.len(), got: assignments.len() });
    }
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    if k < 2 {
        return Err(EsgError::Validation("silhouette needs at least two clusters".into()));
    }
    if let Some(j) = sizes.iter().position(|&s| s == 0) {
        return Err(EsgError::Validation(format!("cluster {j} is empty")));
    }
    let mut total = 0.0;
    for (i, p) in prepared.iter().enumerate() {
        let own = assignments[i];
        if sizes[own] == 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for (q, &a) in prepared.iter().zip(assignments) {
            sums[a] += distance(p, q, metric);
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k).filter(|&j| j != own).map(|j| sums[j] / sizes[j] as f64).fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / prepared.len() as f64)
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    k: usize,
    metric: Metric,
    seed: u64,
    sse: f64,
    iterations: usize,
    dim: usize,
}

pub const CENTROIDS_FILE: &str = "centroids.bin";
pub const MODEL_HEADER_FILE: &str = "model.json";

/// Writes `centroids.bin` (embedding format) and `model.json` into `dir`.
pub fn save_model(dir: &Path, model: &ClusterModel) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let ids = (0..model.k).map(|j| format!("cluster_{j}")).collect();
    write_embeddings(&dir.join(CENTROIDS_FILE), &Embeddings::from_rows(ids, &model.centroids)?)?;
    let header = ModelHeader {
        k: model.k,
        metric: model.metric,
        seed: model.seed,
        sse: model.sse,
        iterations: model.iterations,
        dim: model.dim(),
    };
    std::fs::write(dir.join(MODEL_HEADER_FILE), serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

/// Centroids are stored as 32-bit floats; cosine centroids are renormalized on load.
pub fn load_model(dir: &Path) -> Result<ClusterModel> {
    let header: ModelHeader = serde_json::from_str(&std::fs::read_to_string(dir.join(MODEL_HEADER_FILE))?)?;
    let emb = read_embeddings(&dir.join(CENTROIDS_FILE))?;
    if emb.len() != header.k || emb.dim() != header.dim {
        return Err(EsgError::Consistency(format!("centroid file does not match header k={} dim={}", header.k, header.dim)));
    }
    let mut centroids = emb.to_rows();
    if header.metric == Metric::Cosine {
        for c in &mut centroids {
            *c = normalize(c).ok_or_else(|| EsgError::Degenerate("zero cosine centroid".into()))?;
        }
    }
    Ok(ClusterModel {
        k: header.k,
        metric: header.metric,
        centroids,
        sse: header.sse,
        iterations: header.iterations,
        seed: header.seed,
        history: Vec::new(),
    })
}

pub fn write_assignments(path: &Path, ids: &[String], assignments: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["article_id", "cluster_id"])?;
    for (id, c) in ids.iter().zip(assignments) {
        w.write_record([id.as_str(), c.to_string().as_str()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_assignments(path: &Path) -> Result<Vec<(String, usize)>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(EsgError::from)).collect()
}
