use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::corpus::ArticleRecord;
use crate::error::{EsgError, Result};
use crate::models::RATING_MAX;

/// Statistics of `|target - prediction|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbsDiff {
    pub mean: f64,
    /// Sample standard deviation (n - 1); 0 when `degenerate`.
    pub std: f64,
    pub max: f64,
    pub n: usize,
    /// Set for a single sample, where the standard deviation is undefined.
    pub degenerate: bool,
}

pub fn abs_diff_metrics(predictions: &[f64], targets: &[f64]) -> Result<AbsDiff> {
    if predictions.len() != targets.len() {
        return Err(EsgError::DimensionMismatch { expected: targets.len(), got: predictions.len() });
    }
    if targets.is_empty() {
        return Err(EsgError::EmptySplit("abs diff"));
    }
    let diffs: Vec<f64> = predictions.iter().zip(targets).map(|(p, t)| (t - p).abs()).collect();
    let n = diffs.len();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let max = diffs.iter().copied().fold(0.0, f64::max);
    let degenerate = n == 1;
    let std = if degenerate {
        0.0
    } else {
        (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Ok(AbsDiff { mean, std, max, n, degenerate })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "head", rename_all = "snake_case")]
pub enum HeadMetrics {
    Classification {
        accuracy: f64,
        scc: f64,
    },
    Regression {
        /// Percent; `None` when every target is zero.
        mape: Option<f64>,
        mape_excluded: usize,
        mse: f64,
    },
}

/// Constant predictor: the mean training target.
pub fn baseline_mean(train_targets: &[f64]) -> Result<f64> {
    if train_targets.is_empty() {
        return Err(EsgError::EmptySplit("train"));
    }
    Ok(train_targets.iter().sum::<f64>() / train_targets.len() as f64)
}

/// Independent uniform draws from `[0, 100]`.
pub fn baseline_random(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0.0..=RATING_MAX)).collect()
}

/// `100 x` the mean over non-empty days of each day's mean probability.
pub fn sokolov_rating(days: &[Vec<f64>]) -> Option<f64> {
    let daily: Vec<f64> =
        days.iter().filter(|d| !d.is_empty()).map(|d| d.iter().sum::<f64>() / d.len() as f64).collect();
    (!daily.is_empty()).then(|| RATING_MAX * daily.iter().sum::<f64>() / daily.len() as f64)
}

/// Per company-year aggregated relevance probabilities.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SokolovRatings {
    pub ratings: BTreeMap<(String, i32), f64>,
    /// Requested company-years without a dated, probability-bearing article.
    pub excluded: Vec<(String, i32)>,
}

impl SokolovRatings {
    pub fn get(&self, company_id: &str, year: i32) -> Option<f64> {
        self.ratings.get(&(company_id.to_owned(), year)).copied()
    }
}

/// Groups articles by company, year and publication day. Articles without a
/// relevance probability or a publication timestamp are ignored.
pub fn baseline_sokolov(records: &[ArticleRecord], keys: &[(String, i32)]) -> Result<SokolovRatings> {
    let wanted: BTreeSet<&(String, i32)> = keys.iter().collect();
    let mut days: BTreeMap<(String, i32), BTreeMap<chrono::NaiveDate, Vec<f64>>> = BTreeMap::new();
    for r in records {
        let (Some(p), Some(seen)) = (r.relevance_prob, r.seen_date) else { continue };
        if !(0.0..=1.0).contains(&p) {
            return Err(EsgError::OutOfRange { what: format!("relevance_prob of {}", r.article_id), value: p });
        }
        let key = (r.company_id.clone(), r.month.year);
        if wanted.contains(&key) {
            days.entry(key).or_default().entry(seen.date()).or_default().push(p);
        }
    }
    let mut out = SokolovRatings::default();
    for key in keys {
        let rating = days.get(key).and_then(|d| sokolov_rating(&d.values().cloned().collect::<Vec<_>>()));
        match rating {
            Some(r) => {
                out.ratings.insert(key.clone(), r);
            }
            None => out.excluded.push(key.clone()),
        }
    }
    Ok(out)
}

/// Disjoint index partition of a dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Random shuffle, then `round(n * train_fraction)` series for training of
/// which `round(. * val_fraction_of_train)` are held out for validation.
pub fn split(n: usize, cfg: &TrainConfig, seed: u64) -> Result<Split> {
    cfg.validate()?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_fit = (n as f64 * cfg.train_fraction).round() as usize;
    let n_val = (n_fit as f64 * cfg.val_fraction_of_train).round() as usize;
    let (fit, test) = order.split_at(n_fit.min(n));
    let (val, train) = fit.split_at(n_val.min(fit.len()));
    for (part, name) in [(train, "train"), (val, "validation"), (test, "test")] {
        if part.is_empty() {
            return Err(EsgError::EmptySplit(name));
        }
    }
    Ok(Split { train: train.to_vec(), val: val.to_vec(), test: test.to_vec() })
}
