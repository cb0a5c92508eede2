//! Weak relevance labels from embedding similarity, plus ingestion of
//! externally produced relevance probabilities and sentiment labels.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ArticleRecord, RelevanceLabel, SentimentLabel};
use crate::error::{EsgError, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.1;
pub const EXPECTED_DEFINITIONS: usize = 10;
pub const RELEVANCE_CUTOFF: f64 = 0.5;
pub const EMBEDDING_MAGIC: &[u8; 8] = b"ESGEMB01";

/// `dot(a, b) / (|a| |b|)`.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(EsgError::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(EsgError::Degenerate("cosine of a zero vector".into()));
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Max,
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeakLabelConfig {
    pub threshold: f64,
    pub aggregation: Aggregation,
}

impl Default for WeakLabelConfig {
    fn default() -> Self {
        Self { threshold: DEFAULT_THRESHOLD, aggregation: Aggregation::Max }
    }
}

impl WeakLabelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.threshold) {
            return Err(EsgError::OutOfRange { what: "threshold".into(), value: self.threshold });
        }
        Ok(())
    }
}

/// Row-major vectors with string ids.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Embeddings {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f64>,
    index: HashMap<String, usize>,
}

impl Embeddings {
    pub fn new(dim: usize, ids: Vec<String>, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(EsgError::Validation("embedding dimension must be positive".into()));
        }
        if data.len() != dim * ids.len() {
            return Err(EsgError::DimensionMismatch { expected: dim * ids.len(), got: data.len() });
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(EsgError::DuplicateKey(format!("embedding id {id}")));
            }
        }
        Ok(Self { dim, ids, data, index })
    }

    pub fn from_rows(ids: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(EsgError::DimensionMismatch { expected: dim, got: bad.len() });
        }
        Self::new(dim, ids, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&i| self.row(i))
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }
}

/// Article vectors plus the category definition vectors.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    pub entries: Embeddings,
    pub definitions: Embeddings,
}

impl EmbeddingTable {
    pub fn new(entries: Embeddings, definitions: Embeddings) -> Result<Self> {
        if definitions.is_empty() {
            return Err(EsgError::Validation("no definition vectors".into()));
        }
        if entries.dim() != definitions.dim() && !entries.is_empty() {
            return Err(EsgError::DimensionMismatch { expected: definitions.dim(), got: entries.dim() });
        }
        Ok(Self { entries, definitions })
    }

    pub fn dim(&self) -> usize {
        self.definitions.dim()
    }
}

/// Similarity of an article to the definitions under the configured aggregation.
pub fn relevance_score(article: &[f64], definitions: &Embeddings, agg: Aggregation) -> Result<f64> {
    if article.len() != definitions.dim() {
        return Err(EsgError::DimensionMismatch { expected: definitions.dim(), got: article.len() });
    }
    let sims = definitions.rows().map(|d| cosine(article, d)).collect::<Result<Vec<_>>>()?;
    Ok(match agg {
        Aggregation::Max => sims.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Aggregation::Mean => sims.iter().sum::<f64>() / sims.len() as f64,
    })
}

/// Relevant iff the aggregated similarity is strictly above the threshold.
pub fn weak_label(article: &[f64], table: &EmbeddingTable, cfg: &WeakLabelConfig) -> Result<RelevanceLabel> {
    let score = relevance_score(article, &table.definitions, cfg.aggregation)?;
    Ok(if score > cfg.threshold { RelevanceLabel::Relevant } else { RelevanceLabel::Noise })
}

/// Sets `relevance_label` on every record from its embedding.
pub fn label_records(records: &mut [ArticleRecord], table: &EmbeddingTable, cfg: &WeakLabelConfig) -> Result<()> {
    cfg.validate()?;
    for r in records.iter_mut() {
        let v = table
            .entries
            .get(&r.article_id)
            .ok_or_else(|| EsgError::Validation(format!("no embedding for article {}", r.article_id)))?;
        r.relevance_label = Some(weak_label(v, table, cfg)?);
    }
    Ok(())
}

#[derive(Deserialize)]
struct RelevanceRow {
    article_id: String,
    relevance_prob: f64,
}

#[derive(Deserialize)]
struct SentimentRow {
    article_id: String,
    sentiment: SentimentLabel,
}

fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let row: T = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            EsgError::parse(path, line, e)
        })?;
        out.push(row);
    }
    Ok(out)
}

/// Attaches classifier probabilities (`article_id,relevance_prob`) and
/// sentiment labels (`article_id,sentiment`).
///
/// A supplied probability decides the label (`p >= 0.5` is relevant); records
/// without one keep their weak label.
pub fn attach_predictions(
    records: &mut [ArticleRecord],
    relevance_csv: Option<&Path>,
    sentiment_csv: Option<&Path>,
) -> Result<()> {
    let index: HashMap<String, usize> =
        records.iter().enumerate().map(|(i, r)| (r.article_id.clone(), i)).collect();
    let lookup = |id: &str| index.get(id).copied().ok_or_else(|| EsgError::UnknownId(id.to_string()));
    if let Some(path) = relevance_csv {
        let rows = read_csv::<RelevanceRow>(path)?;
        for row in &rows {
            lookup(&row.article_id)?;
            if !(0.0..=1.0).contains(&row.relevance_prob) {
                return Err(EsgError::OutOfRange {
                    what: format!("relevance_prob of {}", row.article_id),
                    value: row.relevance_prob,
                });
            }
        }
        for row in rows {
            let r = &mut records[index[&row.article_id]];
            r.relevance_prob = Some(row.relevance_prob);
            r.relevance_label = Some(if row.relevance_prob >= RELEVANCE_CUTOFF {
                RelevanceLabel::Relevant
            } else {
                RelevanceLabel::Noise
            });
        }
    }
    if let Some(path) = sentiment_csv {
        let rows = read_csv::<SentimentRow>(path)?;
        for row in &rows {
            lookup(&row.article_id)?;
        }
        for row in rows {
            records[index[&row.article_id]].sentiment_label = Some(row.sentiment);
        }
    }
    Ok(())
}

/// Sidecar id file of an embedding file: `<path>.ids.csv`.
pub fn ids_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ids.csv");
    PathBuf::from(s)
}

/// Writes the binary vectors (magic, `u32` dim, `u64` count, little-endian
/// `f32` values) and the `row,article_id` sidecar.
pub fn write_embeddings(path: &Path, emb: &Embeddings) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(EMBEDDING_MAGIC)?;
    w.write_all(&(emb.dim as u32).to_le_bytes())?;
    w.write_all(&(emb.len() as u64).to_le_bytes())?;
    for v in &emb.data {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    w.flush()?;
    let mut ids = csv::Writer::from_path(ids_path(path))?;
    ids.write_record(["row", "article_id"])?;
    for (i, id) in emb.ids.iter().enumerate() {
        ids.write_record([i.to_string().as_str(), id])?;
    }
    ids.flush()?;
    Ok(())
}

/// Reads an embedding file; without a sidecar the ids are the row numbers.
pub fn read_embeddings(path: &Path) -> Result<Embeddings> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != EMBEDDING_MAGIC {
        return Err(EsgError::parse(path, 0, "not an embedding file (bad magic)"));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let dim = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b8)?;
    let count = u64::from_le_bytes(b8) as usize;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != dim * count * 4 {
        return Err(EsgError::parse(path, 0, format!("expected {} value bytes, found {}", dim * count * 4, bytes.len())));
    }
    let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    let sidecar = ids_path(path);
    let ids = if sidecar.exists() {
        let mut reader = csv::Reader::from_path(&sidecar)?;
        let mut ids = vec![None; count];
        for rec in reader.deserialize::<(usize, String)>() {
            let (row, id) = rec?;
            let slot = ids
                .get_mut(row)
                .ok_or_else(|| EsgError::parse(&sidecar, row as u64, format!("row {row} beyond {count} vectors")))?;
            *slot = Some(id);
        }
        ids.into_iter()
            .enumerate()
            .map(|(i, id)| id.ok_or_else(|| EsgError::parse(&sidecar, 0, format!("row {i} has no id"))))
            .collect::<Result<_>>()?
    } else {
        (0..count).map(|i| i.to_string()).collect()
    };
    Embeddings::new(dim, ids, data)
}

/// Unit basis vectors `e_0 .. e_{count-1}` in `dim` dimensions.
pub fn basis_definitions(count: usize, dim: usize) -> Embeddings {
    assert!(count < dim, "need spare dimensions beyond the definitions");
    let mut data = vec![0.0; count * dim];
    for i in 0..count {
        data[i * dim + i] = 1.0;
    }
    Embeddings::new(dim, (0..count).map(|i| format!("category_{i}")).collect(), data).expect("consistent shape")
}

/// Article vectors against [`basis_definitions`]: each article exceeds the
/// threshold with probability `exceed_rate`.
///
/// An exceeding article has cosine `s` drawn from `(threshold, 0.95]` to one
/// random category and zero to the others; a non-exceeding one has cosine
/// in `[-0.5, threshold]`. The remaining mass lies in the spare dimensions.
/// Returns the vectors and the planted maximum similarity of each.
pub fn synthetic_article_vectors(
    n: usize,
    definitions: usize,
    dim: usize,
    threshold: f64,
    exceed_rate: f64,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    assert!(definitions + 1 < dim, "need at least two spare dimensions");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vectors = Vec::with_capacity(n);
    let mut planted = Vec::with_capacity(n);
    for _ in 0..n {
        let category = rng.random_range(0..definitions);
        let s = if rng.random::<f64>() < exceed_rate {
            // Open at the threshold so ties never count as exceeding.
            threshold + (0.95 - threshold) * (1.0 - rng.random::<f64>())
        } else {
            rng.random_range(-0.5..threshold.min(0.5))
        };
        let mut tail: Vec<f64> = (definitions..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = tail.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        let scale = (1.0 - s * s).sqrt() / norm;
        tail.iter_mut().for_each(|x| *x *= scale);
        let mut v = vec![0.0; dim];
        v[category] = s;
        v[definitions..].copy_from_slice(&tail);
        // Every other category is orthogonal to the article.
        planted.push(if definitions > 1 { s.max(0.0) } else { s });
        vectors.push(v);
    }
    (vectors, planted)
}
