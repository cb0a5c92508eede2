//! Monthly news-signal timeseries per company-year, standard scaling and
//! dataset persistence.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::{CapBand, Catalog};
use crate::corpus::{ArticleRecord, RelevanceLabel, SentimentLabel};
use crate::error::{EsgError, Result};

pub const MONTHS: usize = 12;
pub const SIGMA_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthlyCounts {
    pub n_total: u32,
    pub n_relevant: u32,
    pub n_noise: u32,
    pub n_pos_rel: u32,
    pub n_neg_rel: u32,
    pub n_pos_noise: u32,
    pub n_neg_noise: u32,
    pub cluster_counts: Vec<u32>,
}

/// `(relevant - noise) / total`; 0 for an empty month.
pub fn rel_noise(c: &MonthlyCounts) -> f64 {
    if c.n_total == 0 {
        return 0.0;
    }
    (c.n_relevant as f64 - c.n_noise as f64) / c.n_total as f64
}

/// `(positive - negative) / (positive + negative)`; 0 when both are 0.
pub fn pos_neg(positive: u32, negative: u32) -> f64 {
    let n = positive + negative;
    if n == 0 {
        return 0.0;
    }
    (positive as f64 - negative as f64) / n as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesRow {
    RelNoise,
    PosNegRelevant,
    PosNegNoise,
    Cluster(usize),
}

impl std::fmt::Display for SeriesRow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SeriesRow::RelNoise => f.write_str("rel_noise"),
            SeriesRow::PosNegRelevant => f.write_str("pos_neg_relevant"),
            SeriesRow::PosNegNoise => f.write_str("pos_neg_noise"),
            SeriesRow::Cluster(k) => write!(f, "cluster_{k}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub k: usize,
    /// `false` drops the noise-sentiment row (8 series for k = 6).
    pub include_noise_sentiment: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { k: crate::clustering::DEFAULT_K, include_noise_sentiment: true }
    }
}

impl FeatureConfig {
    pub fn rows(&self) -> Vec<SeriesRow> {
        let mut rows = vec![SeriesRow::RelNoise, SeriesRow::PosNegRelevant];
        if self.include_noise_sentiment {
            rows.push(SeriesRow::PosNegNoise);
        }
        rows.extend((0..self.k).map(SeriesRow::Cluster));
        rows
    }
}

/// Tallies one company-year's records per month. Records need relevance and
/// sentiment labels; records without a cluster id are left out of the
/// cluster counts.
pub fn monthly_counts(records: &[&ArticleRecord], k: usize) -> Result<Vec<MonthlyCounts>> {
    let mut months = vec![MonthlyCounts { cluster_counts: vec![0; k], ..Default::default() }; MONTHS];
    for r in records {
        let m = &mut months[r.month.index()];
        let relevance = r
            .relevance_label
            .ok_or_else(|| EsgError::Validation(format!("article {} has no relevance label", r.article_id)))?;
        let sentiment = r
            .sentiment_label
            .ok_or_else(|| EsgError::Validation(format!("article {} has no sentiment label", r.article_id)))?;
        m.n_total += 1;
        match (relevance, sentiment) {
            (RelevanceLabel::Relevant, s) => {
                m.n_relevant += 1;
                if s == SentimentLabel::Positive { m.n_pos_rel += 1 } else { m.n_neg_rel += 1 }
            }
            (RelevanceLabel::Noise, s) => {
                m.n_noise += 1;
                if s == SentimentLabel::Positive { m.n_pos_noise += 1 } else { m.n_neg_noise += 1 }
            }
        }
        if let Some(c) = r.cluster_id {
            if c >= k {
                return Err(EsgError::Validation(format!("article {} has cluster_id {c} >= K = {k}", r.article_id)));
            }
            m.cluster_counts[c] += 1;
        }
    }
    Ok(months)
}

/// `series[k][m]` = articles of cluster `k` in month `m` (zero-based).
pub fn cluster_series(records: &[&ArticleRecord], k: usize) -> Result<Vec<[u32; MONTHS]>> {
    let mut out = vec![[0u32; MONTHS]; k];
    for r in records {
        if let Some(c) = r.cluster_id {
            if c >= k {
                return Err(EsgError::Validation(format!("article {} has cluster_id {c} >= K = {k}", r.article_id)));
            }
            out[c][r.month.index()] += 1;
        }
    }
    Ok(out)
}

/// Scaling state recorded on a series.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaledBy(pub String);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompanyYearSeries {
    pub company_id: String,
    pub year: i32,
    pub rows: Vec<SeriesRow>,
    /// `rows.len() x 12`, row-major.
    pub matrix: Vec<f64>,
    pub target: f64,
    pub cap_band: CapBand,
    /// Fingerprint of the scaler applied, if any.
    #[serde(default)]
    pub scaled_by: Option<ScaledBy>,
}

impl CompanyYearSeries {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * MONTHS..(i + 1) * MONTHS]
    }

    pub fn key(&self) -> (String, i32) {
        (self.company_id.clone(), self.year)
    }

    /// Keeps only the given row positions, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut matrix = Vec::with_capacity(rows.len() * MONTHS);
        for &r in rows {
            matrix.extend_from_slice(self.row(r));
        }
        Self { rows: rows.iter().map(|&r| self.rows[r]).collect(), matrix, ..self.clone() }
    }
}

/// Matrix of one company-year from its records.
pub fn company_matrix(records: &[&ArticleRecord], cfg: &FeatureConfig) -> Result<Vec<f64>> {
    let counts = monthly_counts(records, cfg.k)?;
    let mut matrix = Vec::with_capacity(cfg.rows().len() * MONTHS);
    for row in cfg.rows() {
        for c in &counts {
            matrix.push(match row {
                SeriesRow::RelNoise => rel_noise(c),
                SeriesRow::PosNegRelevant => pos_neg(c.n_pos_rel, c.n_neg_rel),
                SeriesRow::PosNegNoise => pos_neg(c.n_pos_noise, c.n_neg_noise),
                SeriesRow::Cluster(k) => c.cluster_counts[k] as f64,
            });
        }
    }
    Ok(matrix)
}

/// One series per company with `year` records, in company-id order.
pub fn assemble(records: &[ArticleRecord], catalog: &Catalog, year: i32, cfg: &FeatureConfig) -> Result<Vec<CompanyYearSeries>> {
    let mut by_company: BTreeMap<&str, Vec<&ArticleRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.month.year == year) {
        by_company.entry(r.company_id.as_str()).or_default().push(r);
    }
    by_company
        .into_iter()
        .map(|(company_id, recs)| {
            let target = catalog.rating(company_id, year).ok_or_else(|| {
                EsgError::Consistency(format!("company {company_id} has articles but no {year} rating; prune first"))
            })?;
            let company = catalog
                .company(company_id)
                .ok_or_else(|| EsgError::Consistency(format!("company {company_id} is not in the catalog")))?;
            Ok(CompanyYearSeries {
                company_id: company_id.to_string(),
                year,
                rows: cfg.rows(),
                matrix: company_matrix(&recs, cfg)?,
                target,
                cap_band: company.cap_band(),
                scaled_by: None,
            })
        })
        .collect()
}

/// Per-row mean and population standard deviation of the training series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Company-year keys the state was fitted on, sorted.
    pub fitted_on: Vec<(String, i32)>,
    pub fingerprint: String,
}

impl ScalerState {
    pub fn was_fitted_on(&self, key: &(String, i32)) -> bool {
        self.fitted_on.binary_search(key).is_ok()
    }
}

/// Fits per-row moments over all training companies and months.
pub fn fit_scaler(train: &[CompanyYearSeries]) -> Result<ScalerState> {
    let first = train.first().ok_or(EsgError::EmptySplit("scaler training"))?;
    let rows = first.n_rows();
    if let Some(bad) = train.iter().find(|s| s.n_rows() != rows) {
        return Err(EsgError::DimensionMismatch { expected: rows, got: bad.n_rows() });
    }
    let n = (train.len() * MONTHS) as f64;
    let mut mean = vec![0.0; rows];
    let mut std = vec![0.0; rows];
    for r in 0..rows {
        let mu = train.iter().flat_map(|s| s.row(r)).sum::<f64>() / n;
        let var = train.iter().flat_map(|s| s.row(r)).map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
        mean[r] = mu;
        std[r] = var.sqrt().max(SIGMA_FLOOR);
    }
    let mut fitted_on: Vec<(String, i32)> = train.iter().map(CompanyYearSeries::key).collect();
    fitted_on.sort();
    let mut h = Sha256::new();
    for (c, y) in &fitted_on {
        h.update(c.as_bytes());
        h.update([0x1f]);
        h.update(y.to_le_bytes());
    }
    let fingerprint = hex::encode(&h.finalize()[..8]);
    Ok(ScalerState { mean, std, fitted_on, fingerprint })
}

/// `(x - mean_row) / std_row` for every cell. Applying twice scales twice.
pub fn apply_scaler(state: &ScalerState, series: &CompanyYearSeries) -> Result<CompanyYearSeries> {
    if series.n_rows() != state.mean.len() {
        return Err(EsgError::DimensionMismatch { expected: state.mean.len(), got: series.n_rows() });
    }
    let matrix = series
        .matrix
        .chunks(MONTHS)
        .zip(state.mean.iter().zip(&state.std))
        .flat_map(|(row, (mu, sd))| row.iter().map(move |x| (x - mu) / sd))
        .collect();
    Ok(CompanyYearSeries { matrix, scaled_by: Some(ScaledBy(state.fingerprint.clone())), ..series.clone() })
}

/// Series of one year with their layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub year: i32,
    pub config: FeatureConfig,
    pub series: Vec<CompanyYearSeries>,
    pub scaler: Option<ScalerState>,
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    year: i32,
    k: usize,
    include_noise_sentiment: bool,
    row_order: Vec<SeriesRow>,
    scaler: Option<ScalerState>,
    companies: Vec<CompanyEntry>,
}

#[derive(Serialize, Deserialize)]
struct CompanyEntry {
    company_id: String,
    target: f64,
    cap_band: CapBand,
    scaled_by: Option<ScaledBy>,
    file: String,
}

pub const DATASET_HEADER: &str = "header.json";

impl Dataset {
    pub fn rows(&self) -> Vec<SeriesRow> {
        self.config.rows()
    }

    /// `header.json` plus one little-endian `f64` matrix file per company.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut companies = Vec::with_capacity(self.series.len());
        for (i, s) in self.series.iter().enumerate() {
            let file = format!("{i:05}.bin");
            let bytes: Vec<u8> = s.matrix.iter().flat_map(|v| v.to_le_bytes()).collect();
            std::fs::write(dir.join(&file), bytes)?;
            companies.push(CompanyEntry {
                company_id: s.company_id.clone(),
                target: s.target,
                cap_band: s.cap_band,
                scaled_by: s.scaled_by.clone(),
                file,
            });
        }
        let header = DatasetHeader {
            year: self.year,
            k: self.config.k,
            include_noise_sentiment: self.config.include_noise_sentiment,
            row_order: self.rows(),
            scaler: self.scaler.clone(),
            companies,
        };
        std::fs::write(dir.join(DATASET_HEADER), serde_json::to_string_pretty(&header)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let header: DatasetHeader = serde_json::from_str(&std::fs::read_to_string(dir.join(DATASET_HEADER))?)?;
        let config = FeatureConfig { k: header.k, include_noise_sentiment: header.include_noise_sentiment };
        if config.rows() != header.row_order {
            return Err(EsgError::Consistency("row_order does not match k and sentiment layout".into()));
        }
        let len = header.row_order.len() * MONTHS;
        let series = header
            .companies
            .into_iter()
            .map(|c| {
                let path = dir.join(&c.file);
                let bytes = std::fs::read(&path)?;
                if bytes.len() != len * 8 {
                    return Err(EsgError::parse(&path, 0, format!("expected {} bytes, found {}", len * 8, bytes.len())));
                }
                let matrix = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
                Ok(CompanyYearSeries {
                    company_id: c.company_id,
                    year: header.year,
                    rows: header.row_order.clone(),
                    matrix,
                    target: c.target,
                    cap_band: c.cap_band,
                    scaled_by: c.scaled_by,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { year: header.year, config, series, scaler: header.scaler })
    }

    /// Long format: `company_id,year,row,month,value` with 1-based months.
    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "company_id,year,row,month,value")?;
        for s in &self.series {
            for (r, row) in s.rows.iter().enumerate() {
                for (m, v) in s.row(r).iter().enumerate() {
                    writeln!(w, "{},{},{},{},{}", s.company_id, s.year, row, m + 1, v)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Company, RatingRecord};
    use crate::month::YearMonth;
    use proptest::prelude::*;

    #[test]
    fn ratio_anchors() {
        let c = MonthlyCounts { n_total: 10, n_relevant: 7, n_noise: 3, ..Default::default() };
        assert_eq!(rel_noise(&c), 0.4);
        let all = MonthlyCounts { n_total: 4, n_relevant: 4, ..Default::default() };
        assert_eq!(rel_noise(&all), 1.0);
        assert_eq!(rel_noise(&MonthlyCounts::default()), 0.0);
        assert_eq!(pos_neg(3, 1), 0.5);
        assert_eq!(pos_neg(2, 2), 0.0);
        assert_eq!(pos_neg(0, 0), 0.0);
    }

    fn rec(id: usize, company: &str, month: u32, rel: bool, pos: bool, cluster: Option<usize>) -> ArticleRecord {
        ArticleRecord {
            article_id: format!("a{id}"),
            company_id: company.into(),
            month: YearMonth::new(2019, month).unwrap(),
            summary: "s".into(),
            relevance_prob: None,
            relevance_label: Some(if rel { RelevanceLabel::Relevant } else { RelevanceLabel::Noise }),
            sentiment_label: Some(if pos { SentimentLabel::Positive } else { SentimentLabel::Negative }),
            cluster_id: cluster,
            seen_date: None,
        }
    }

    #[test]
    fn cluster_counts() {
        let recs: Vec<ArticleRecord> = (0..3).map(|i| rec(i, "c", 6, true, true, Some(2))).collect();
        let refs: Vec<&ArticleRecord> = recs.iter().collect();
        let s = cluster_series(&refs, 6).unwrap();
        assert_eq!(s[2][5], 3);
        assert_eq!(s.iter().flatten().sum::<u32>(), 3);
        assert!(cluster_series(&[], 6).unwrap().iter().flatten().all(|&v| v == 0));
        let bad = rec(9, "c", 1, true, true, Some(6));
        assert!(cluster_series(&[&bad], 6).is_err());
    }

    fn catalog(ids: &[&str]) -> Catalog {
        let companies = ids
            .iter()
            .map(|id| Company {
                id: id.to_string(),
                name_long: id.to_string(),
                name_short: id.to_string(),
                name_oneword: id.to_string(),
                market_cap_usd: Some(5e9),
            })
            .collect();
        let ratings = ids.iter().map(|id| RatingRecord { company_id: id.to_string(), year: 2019, rating: 42.0 }).collect();
        Catalog::new(companies, ratings).unwrap()
    }

    #[test]
    fn hand_counted_fixture() {
        // June: 3 relevant (2 pos, 1 neg), 1 noise (neg); clusters 0,0,1,none.
        // September: 2 noise (1 pos 1 neg), 4 relevant (all pos); clusters 5 x6.
        let recs = vec![
            rec(0, "A", 6, true, true, Some(0)),
            rec(1, "A", 6, true, true, Some(0)),
            rec(2, "A", 6, true, false, Some(1)),
            rec(3, "A", 6, false, false, None),
            rec(4, "A", 9, false, true, Some(5)),
            rec(5, "A", 9, false, false, Some(5)),
            rec(6, "A", 9, true, true, Some(5)),
            rec(7, "A", 9, true, true, Some(5)),
            rec(8, "A", 9, true, true, Some(5)),
            rec(9, "A", 9, true, true, Some(5)),
        ];
        let series = assemble(&recs, &catalog(&["A"]), 2019, &FeatureConfig::default()).unwrap();
        assert_eq!(series.len(), 1);
        let s = &series[0];
        let mut want = vec![0.0; 9 * 12];
        want[5] = 0.5; // (3 - 1) / 4
        want[8] = 1.0 / 3.0; // (4 - 2) / 6
        want[12 + 5] = 1.0 / 3.0; // (2 - 1) / 3
        want[12 + 8] = 1.0;
        want[24 + 5] = -1.0;
        want[24 + 8] = 0.0;
        want[36 + 5] = 2.0;
        want[48 + 5] = 1.0;
        want[96 + 8] = 6.0;
        assert_eq!(s.matrix, want);
        assert_eq!(s.target, 42.0);
        assert_eq!(s.cap_band, CapBand::MidCap);
    }

    #[test]
    fn assembly_errors_and_fill() {
        let recs = vec![rec(0, "A", 6, true, true, None), rec(1, "B", 2, false, true, None)];
        let out = assemble(&recs, &catalog(&["A", "B"]), 2019, &FeatureConfig::default()).unwrap();
        assert_eq!(out.len(), 2);
        let a = &out[0];
        for r in 0..9 {
            for m in 0..12 {
                if m != 5 {
                    assert_eq!(a.row(r)[m], 0.0);
                }
            }
        }
        assert!(assemble(&recs, &catalog(&["A"]), 2019, &FeatureConfig::default()).is_err());
        let eight = FeatureConfig { include_noise_sentiment: false, ..Default::default() };
        assert_eq!(assemble(&recs, &catalog(&["A", "B"]), 2019, &eight).unwrap()[0].n_rows(), 8);
    }

    fn series(id: &str, matrix: Vec<f64>) -> CompanyYearSeries {
        CompanyYearSeries {
            company_id: id.into(),
            year: 2019,
            rows: FeatureConfig { k: 0, include_noise_sentiment: false }.rows(),
            matrix,
            target: 10.0,
            cap_band: CapBand::Unknown,
            scaled_by: None,
        }
    }

    #[test]
    fn scaler_moments() {
        let train: Vec<CompanyYearSeries> = (0..5)
            .map(|i| series(&format!("c{i}"), (0..24).map(|j| if j < 12 { 3.0 } else { ((i * 7 + j * 3) % 11) as f64 }).collect()))
            .collect();
        let state = fit_scaler(&train).unwrap();
        let scaled: Vec<CompanyYearSeries> = train.iter().map(|s| apply_scaler(&state, s).unwrap()).collect();
        // Constant row collapses to zero.
        assert!(scaled.iter().all(|s| s.row(0).iter().all(|&v| v == 0.0)));
        let vals: Vec<f64> = scaled.iter().flat_map(|s| s.row(1).to_vec()).collect();
        let mu = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd = (vals.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / vals.len() as f64).sqrt();
        assert!(mu.abs() < 1e-9 && (sd - 1.0).abs() < 1e-6);
        let twice = apply_scaler(&state, &scaled[0]).unwrap();
        assert_ne!(twice.matrix, scaled[0].matrix);
        assert!(state.was_fitted_on(&("c3".into(), 2019)));
        assert!(!state.was_fitted_on(&("zz".into(), 2019)));
        assert_eq!(scaled[0].scaled_by, Some(ScaledBy(state.fingerprint.clone())));
        assert!(fit_scaler(&[]).is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset {
            year: 2019,
            config: FeatureConfig { k: 0, include_noise_sentiment: false },
            series: vec![series("x", (0..24).map(|v| v as f64 * 0.25).collect()), series("y", vec![1.5; 24])],
            scaler: None,
        };
        ds.save(dir.path()).unwrap();
        assert_eq!(Dataset::load(dir.path()).unwrap(), ds);
        let csv = dir.path().join("long.csv");
        ds.export_csv(&csv).unwrap();
        let text = std::fs::read_to_string(csv).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 24);
        assert!(text.contains("x,2019,pos_neg_relevant,12,5.75"));
    }

    proptest! {
        #[test]
        fn permutation_invariance_and_bounds(
            spec in prop::collection::vec((1u32..=12, any::<bool>(), any::<bool>(), prop::option::of(0usize..6)), 0..60),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let recs: Vec<ArticleRecord> =
                spec.iter().enumerate().map(|(i, &(m, r, p, c))| rec(i, "A", m, r, p, c)).collect();
            let mut shuffled = recs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let cfg = FeatureConfig::default();
            let a = company_matrix(&recs.iter().collect::<Vec<_>>(), &cfg).unwrap();
            let b = company_matrix(&shuffled.iter().collect::<Vec<_>>(), &cfg).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a[..36].iter().all(|v| (-1.0..=1.0).contains(v)));
            for m in 0..12 {
                let clustered = recs.iter().filter(|r| r.month.index() == m && r.cluster_id.is_some()).count();
                let sum: f64 = (3..9).map(|r| a[r * 12 + m]).sum();
                prop_assert_eq!(sum, clustered as f64);
            }
        }
    }
}
