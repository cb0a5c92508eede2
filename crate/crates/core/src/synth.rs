//! Synthetic catalogs and labelled corpora with a known rating signal.
//!
//! Ratings are a linear function of the per-row yearly means of the
//! assembled feature matrix, standardized across companies, plus Gaussian
//! noise. Article counts, labels and cluster ids are drawn from latent
//! per-company rates so that the rows vary between companies.

use chrono::{Duration, NaiveTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, Company, RatingRecord};
use crate::corpus::{article_id, ArticleRecord, RelevanceLabel, SentimentLabel};
use crate::error::{EsgError, Result};
use crate::features::{company_matrix, FeatureConfig, SeriesRow, MONTHS};
use crate::models::RATING_MAX;
use crate::month::YearMonth;

/// Which feature rows carry the planted signal.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalRows {
    #[default]
    All,
    ClusterOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_companies: usize,
    pub year: i32,
    pub features: FeatureConfig,
    /// Mean monthly article count is drawn per company from this range.
    pub min_monthly_articles: u32,
    pub max_monthly_articles: u32,
    pub signal_rows: SignalRows,
    /// Rating standard deviation explained by the signal.
    pub signal_scale: f64,
    pub rating_center: f64,
    pub noise_sd: f64,
    /// Share of companies without a market capitalization.
    pub unknown_cap_share: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_companies: 300,
            year: 2020,
            features: FeatureConfig::default(),
            min_monthly_articles: 4,
            max_monthly_articles: 24,
            signal_rows: SignalRows::All,
            signal_scale: 15.0,
            rating_center: 50.0,
            noise_sd: 3.0,
            unknown_cap_share: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_companies == 0 || self.min_monthly_articles == 0 || self.min_monthly_articles > self.max_monthly_articles {
            return Err(EsgError::Validation("need companies and 0 < min_monthly_articles <= max_monthly_articles".into()));
        }
        if !(self.noise_sd >= 0.0 && self.signal_scale >= 0.0) || !(0.0..=1.0).contains(&self.unknown_cap_share) {
            return Err(EsgError::Validation("noise_sd, signal_scale must be >= 0 and unknown_cap_share in [0, 1]".into()));
        }
        if self.signal_rows == SignalRows::ClusterOnly && self.features.k == 0 {
            return Err(EsgError::Validation("cluster-only signal needs k > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SynthData {
    pub catalog: Catalog,
    pub records: Vec<ArticleRecord>,
    /// Weight of each feature row in the standardized signal; zero for rows
    /// without signal.
    pub coefficients: Vec<(SeriesRow, f64)>,
    /// Noise-free ratings before clamping, in company order.
    pub planted: Vec<f64>,
}

struct Latent {
    volume: f64,
    relevant: f64,
    positive_relevant: f64,
    positive_noise: f64,
    clusters: Vec<f64>,
}

fn latent(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Latent {
    let weights: Vec<f64> = (0..cfg.features.k).map(|_| -rng.random::<f64>().max(1e-12).ln()).collect();
    let total: f64 = weights.iter().sum();
    Latent {
        volume: rng.random_range(cfg.min_monthly_articles as f64..=cfg.max_monthly_articles as f64),
        relevant: rng.random_range(0.2..0.85),
        positive_relevant: rng.random_range(0.2..0.8),
        positive_noise: rng.random_range(0.2..0.8),
        clusters: weights.iter().map(|w| w / total).collect(),
    }
}

fn categorical(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let mut u = rng.random::<f64>();
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn jitter(rng: &mut ChaCha8Rng, p: f64) -> f64 {
    (p + rng.random_range(-0.1..0.1)).clamp(0.02, 0.98)
}

fn company_records(rng: &mut ChaCha8Rng, cfg: &SynthConfig, id: &str, z: &Latent) -> Vec<ArticleRecord> {
    let mut out = Vec::new();
    for month in YearMonth::year_months(cfg.year) {
        let lo = (z.volume * 0.5).floor().max(1.0) as u32;
        let hi = (z.volume * 1.5).ceil() as u32;
        let n = rng.random_range(lo..=hi);
        let (rel, pos_rel, pos_noise) = (jitter(rng, z.relevant), jitter(rng, z.positive_relevant), jitter(rng, z.positive_noise));
        let days = (month.last_day() - month.first_day()).num_days() + 1;
        for i in 0..n {
            let relevant = rng.random::<f64>() < rel;
            let positive = rng.random::<f64>() < if relevant { pos_rel } else { pos_noise };
            let prob = if relevant { rng.random_range(0.5..=1.0) } else { rng.random_range(0.0..0.5) };
            let day = month.first_day() + Duration::days(rng.random_range(0..days));
            let time = NaiveTime::from_num_seconds_from_midnight_opt(rng.random_range(0..86_400), 0).expect("in range");
            let url = format!("https://news.example.org/{id}/{month}/{i}");
            out.push(ArticleRecord {
                article_id: article_id(&url, id),
                company_id: id.to_owned(),
                month,
                summary: format!("Synthetic article {i} about {id} in {month}."),
                relevance_prob: Some(prob),
                relevance_label: Some(if relevant { RelevanceLabel::Relevant } else { RelevanceLabel::Noise }),
                sentiment_label: Some(if positive { SentimentLabel::Positive } else { SentimentLabel::Negative }),
                cluster_id: (cfg.features.k > 0).then(|| categorical(rng, &z.clusters)),
                seen_date: Some(day.and_time(time)),
            });
        }
    }
    out
}

fn standardize(values: &mut [f64]) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    for v in values.iter_mut() {
        *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rows = cfg.features.rows();
    let width = (cfg.n_companies.max(2) - 1).to_string().len().max(3);

    let mut companies = Vec::with_capacity(cfg.n_companies);
    let mut records = Vec::new();
    let mut row_means: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.n_companies); rows.len()];
    for c in 0..cfg.n_companies {
        let id = format!("SYN{c:0width$}");
        let market_cap_usd =
            (rng.random::<f64>() >= cfg.unknown_cap_share).then(|| 10f64.powf(rng.random_range(8.5..11.5)));
        companies.push(Company {
            name_long: format!("Synthetic Holdings {c:0width$} Incorporated"),
            name_short: format!("Synthetic Holdings {c:0width$}"),
            name_oneword: format!("Synth{c:0width$}"),
            id: id.clone(),
            market_cap_usd,
        });
        let z = latent(&mut rng, cfg);
        let own = company_records(&mut rng, cfg, &id, &z);
        let refs: Vec<&ArticleRecord> = own.iter().collect();
        let matrix = company_matrix(&refs, &cfg.features)?;
        for (r, means) in row_means.iter_mut().enumerate() {
            means.push(matrix[r * MONTHS..(r + 1) * MONTHS].iter().sum::<f64>() / MONTHS as f64);
        }
        records.extend(own);
    }

    let coefficients: Vec<(SeriesRow, f64)> = rows
        .iter()
        .map(|&row| {
            let carries = cfg.signal_rows == SignalRows::All || matches!(row, SeriesRow::Cluster(_));
            let magnitude = rng.random_range(0.5..1.0);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            (row, if carries { sign * magnitude } else { 0.0 })
        })
        .collect();
    for means in &mut row_means {
        standardize(means);
    }
    let mut signal: Vec<f64> = (0..cfg.n_companies)
        .map(|c| coefficients.iter().zip(&row_means).map(|((_, b), m)| b * m[c]).sum())
        .collect();
    standardize(&mut signal);
    let planted: Vec<f64> = signal.iter().map(|s| cfg.rating_center + cfg.signal_scale * s).collect();
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| EsgError::Validation(e.to_string()))?;
    let ratings = companies
        .iter()
        .zip(&planted)
        .map(|(co, p)| RatingRecord {
            company_id: co.id.clone(),
            year: cfg.year,
            rating: (p + noise.sample(&mut rng)).clamp(0.0, RATING_MAX),
        })
        .collect();

    Ok(SynthData { catalog: Catalog::new(companies, ratings)?, records, coefficients, planted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::assemble;

    fn small(signal_rows: SignalRows) -> SynthConfig {
        SynthConfig { n_companies: 40, signal_rows, seed: 3, ..SynthConfig::default() }
    }

    #[test]
    fn deterministic_and_consistent() {
        let a = generate(&small(SignalRows::All)).unwrap();
        let b = generate(&small(SignalRows::All)).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.catalog.ratings(), b.catalog.ratings());
        let series = assemble(&a.records, &a.catalog, 2020, &FeatureConfig::default()).unwrap();
        assert_eq!(series.len(), 40);
        assert!(a.records.iter().all(|r| r.relevance_prob.is_some() && r.seen_date.is_some()));
        assert!(a.catalog.ratings().iter().all(|r| (0.0..=100.0).contains(&r.rating)));
    }

    #[test]
    fn cluster_only_signal_zeroes_other_rows() {
        let d = generate(&small(SignalRows::ClusterOnly)).unwrap();
        for (row, b) in &d.coefficients {
            assert_eq!(*b != 0.0, matches!(row, SeriesRow::Cluster(_)), "{row}");
        }
    }

    #[test]
    fn ratings_follow_planted_signal() {
        let cfg = SynthConfig { noise_sd: 0.0, ..small(SignalRows::All) };
        let d = generate(&cfg).unwrap();
        for (r, p) in d.catalog.ratings().iter().zip(&d.planted) {
            assert!((r.rating - p.clamp(0.0, 100.0)).abs() < 1e-12);
        }
        let mean = d.planted.iter().sum::<f64>() / 40.0;
        assert!((mean - 50.0).abs() < 1e-9);
    }
}
