use std::collections::BTreeSet;
use std::fmt::Write as _;

use esg_neuro::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{abs_diff_metrics, baseline_mean, baseline_random, split, AbsDiff, Split, HeadMetrics, SokolovRatings};
use super::train::{evaluate, train};
use super::{Precision, TrainConfig};
use crate::catalog::CapBand;
use crate::error::{EsgError, Result};
use crate::features::{apply_scaler, fit_scaler, CompanyYearSeries, ScalerState, SeriesRow};
use crate::models::{Arch, Head, ModelSpec, Network};

pub const BASELINE_MEAN: &str = "baseline/mean";
pub const BASELINE_RANDOM: &str = "baseline/random";
pub const BASELINE_SOKOLOV: &str = "baseline/sokolov";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Model,
    Baseline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandMetrics {
    pub band: CapBand,
    /// `None` when no test series falls into the band.
    pub abs_diff: Option<AbsDiff>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub final_lr: f64,
}

/// One model or baseline evaluated on one split's test partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub name: String,
    pub kind: EntryKind,
    pub head_metrics: Option<HeadMetrics>,
    pub abs_diff: AbsDiff,
    pub bands: Vec<BandMetrics>,
    pub training: Option<TrainSummary>,
    /// Test series the entry could not rate.
    pub excluded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub scaler_fingerprint: String,
    pub entries: Vec<RunEntry>,
}

/// Means over runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub kind: EntryKind,
    pub runs: usize,
    pub accuracy: Option<f64>,
    pub scc: Option<f64>,
    pub mape: Option<f64>,
    pub mse: Option<f64>,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    /// Standard deviation over runs of the per-run mean.
    pub mean_spread: f64,
    pub bands: Vec<(CapBand, Option<f64>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub years: Vec<i32>,
    pub n_series: usize,
    pub rows: Vec<String>,
    pub models: Vec<ModelSpec>,
    pub config: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub header: ReportHeader,
    pub runs: Vec<RunReport>,
    pub summary: Vec<SummaryRow>,
}

impl EvalReport {
    pub fn summary_row(&self, name: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned summary table followed by per-band mean absolute differences.
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>, digits: usize| v.map_or_else(|| "-".to_owned(), |x| format!("{x:.digits$}"));
        let mut rows: Vec<Vec<String>> = vec![["model", "acc", "scc", "mape", "mse", "mean", "std", "max"]
            .iter()
            .map(|s| (*s).to_owned())
            .collect()];
        for r in &self.summary {
            rows.push(vec![
                r.name.clone(),
                fmt(r.accuracy, 3),
                fmt(r.scc, 3),
                fmt(r.mape, 2),
                fmt(r.mse, 2),
                fmt(Some(r.mean), 2),
                fmt(Some(r.std), 2),
                fmt(Some(r.max), 2),
            ]);
        }
        let mut out = align(&rows);
        out.push('\n');
        let mut band_rows: Vec<Vec<String>> =
            vec![std::iter::once("model".to_owned()).chain(CapBand::ALL.iter().map(ToString::to_string)).collect()];
        for r in &self.summary {
            band_rows.push(std::iter::once(r.name.clone()).chain(r.bands.iter().map(|(_, v)| fmt(*v, 2))).collect());
        }
        out.push_str(&align(&band_rows));
        out
    }
}

fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in rows {
        for (c, cell) in row.iter().enumerate() {
            if c == 0 {
                let _ = write!(out, "{cell:<w$}", w = widths[0]);
            } else {
                let _ = write!(out, "  {cell:>w$}", w = widths[c]);
            }
        }
        out.push('\n');
    }
    out
}

fn entry(
    name: String,
    kind: EntryKind,
    predictions: &[Option<f64>],
    test: &[&CompanyYearSeries],
    head_metrics: Option<HeadMetrics>,
    training: Option<TrainSummary>,
) -> Result<Option<RunEntry>> {
    let rated: Vec<(f64, f64, CapBand)> =
        predictions.iter().zip(test).filter_map(|(p, s)| p.map(|p| (p, s.target, s.cap_band))).collect();
    if rated.is_empty() {
        return Ok(None);
    }
    let stats = |band: Option<CapBand>| -> Result<Option<AbsDiff>> {
        let (p, t): (Vec<f64>, Vec<f64>) =
            rated.iter().filter(|r| band.is_none_or(|b| r.2 == b)).map(|r| (r.0, r.1)).unzip();
        if p.is_empty() {
            return Ok(None);
        }
        abs_diff_metrics(&p, &t).map(Some)
    };
    let bands = CapBand::ALL.iter().map(|&b| Ok(BandMetrics { band: b, abs_diff: stats(Some(b))? })).collect::<Result<_>>()?;
    Ok(Some(RunEntry {
        name,
        kind,
        head_metrics,
        abs_diff: stats(None)?.expect("non-empty"),
        bands,
        training,
        excluded: predictions.len() - rated.len(),
    }))
}

fn train_and_test<T: Scalar>(
    spec: &ModelSpec,
    seed: u64,
    train_set: &[&CompanyYearSeries],
    val: &[&CompanyYearSeries],
    test: &[&CompanyYearSeries],
    cfg: &TrainConfig,
) -> Result<RunEntry> {
    let mut net = Network::<T>::build(spec, seed)?;
    let outcome = train(&mut net, train_set, val, cfg, seed ^ 0x5eed)?;
    let eval = evaluate(&mut net, test)?;
    let training = TrainSummary {
        epochs: outcome.history.len(),
        best_epoch: outcome.best_epoch,
        stopped_early: outcome.stopped_early,
        final_lr: outcome.history.last().map_or(cfg.lr, |h| h.lr),
    };
    let predictions: Vec<Option<f64>> = eval.predictions.into_iter().map(Some).collect();
    Ok(entry(spec.label(), EntryKind::Model, &predictions, test, Some(eval.metrics), Some(training))?.expect("non-empty test"))
}

/// Repeated random splits: per run, scale with statistics of the training
/// partition (train + validation), train every spec from fresh weights,
/// and score models and baselines on the held-out test partition.
/// Fits the scaler on the training and validation series of `parts` and
/// applies it to every series.
pub fn apply_split_scaler(series: &[CompanyYearSeries], parts: &Split) -> Result<(ScalerState, Vec<CompanyYearSeries>)> {
    let fit: Vec<CompanyYearSeries> = parts.train.iter().chain(&parts.val).map(|&i| series[i].clone()).collect();
    let scaler = fit_scaler(&fit)?;
    let scaled = series.iter().map(|s| apply_scaler(&scaler, s)).collect::<Result<_>>()?;
    Ok((scaler, scaled))
}

pub fn run_protocol(
    series: &[CompanyYearSeries],
    specs: &[ModelSpec],
    sokolov: Option<&SokolovRatings>,
    cfg: &TrainConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    let first = series.first().ok_or(EsgError::EmptySplit("dataset"))?;
    if let Some(s) = series.iter().find(|s| s.scaled_by.is_some()) {
        return Err(EsgError::Validation(format!("series {} {} is already scaled", s.company_id, s.year)));
    }
    if let Some(s) = series.iter().find(|s| s.rows != first.rows) {
        return Err(EsgError::DimensionMismatch { expected: first.n_rows(), got: s.n_rows() });
    }
    for spec in specs {
        if spec.input_rows != first.n_rows() {
            return Err(EsgError::DimensionMismatch { expected: first.n_rows(), got: spec.input_rows });
        }
        spec.validate()?;
    }

    let mut seeds = ChaCha8Rng::seed_from_u64(cfg.split_seed);
    let mut runs = Vec::with_capacity(cfg.n_runs);
    for run in 0..cfg.n_runs {
        let seed: u64 = seeds.random();
        let parts = split(series.len(), cfg, seed)?;
        let (scaler, scaled) = apply_split_scaler(series, &parts)?;
        let pick = |idx: &[usize]| idx.iter().map(|&i| &scaled[i]).collect::<Vec<_>>();
        let (train_set, val, test) = (pick(&parts.train), pick(&parts.val), pick(&parts.test));

        let mut entries = Vec::new();
        let mut model_seeds = ChaCha8Rng::seed_from_u64(seed);
        for spec in specs {
            let model_seed: u64 = model_seeds.random();
            entries.push(match cfg.precision {
                Precision::F32 => train_and_test::<f32>(spec, model_seed, &train_set, &val, &test, cfg)?,
                Precision::F64 => train_and_test::<f64>(spec, model_seed, &train_set, &val, &test, cfg)?,
            });
        }

        let fit_targets: Vec<f64> = parts.train.iter().chain(&parts.val).map(|&i| series[i].target).collect();
        let mean = baseline_mean(&fit_targets)?;
        let baselines: Vec<(&str, Vec<Option<f64>>)> = [
            Some((BASELINE_MEAN, vec![Some(mean); test.len()])),
            Some((BASELINE_RANDOM, baseline_random(test.len(), seed ^ 0xba5e).into_iter().map(Some).collect())),
            sokolov.map(|sk| (BASELINE_SOKOLOV, test.iter().map(|s| sk.get(&s.company_id, s.year)).collect())),
        ]
        .into_iter()
        .flatten()
        .collect();
        for (name, predictions) in baselines {
            if let Some(e) = entry(name.to_owned(), EntryKind::Baseline, &predictions, &test, None, None)? {
                entries.push(e);
            }
        }
        runs.push(RunReport {
            run,
            seed,
            n_train: train_set.len(),
            n_val: val.len(),
            n_test: test.len(),
            scaler_fingerprint: scaler.fingerprint,
            entries,
        });
    }

    let years: BTreeSet<i32> = series.iter().map(|s| s.year).collect();
    Ok(EvalReport {
        header: ReportHeader {
            years: years.into_iter().collect(),
            n_series: series.len(),
            rows: first.rows.iter().map(ToString::to_string).collect(),
            models: specs.to_vec(),
            config: cfg.clone(),
        },
        summary: summarize(&runs),
        runs,
    })
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn summarize(runs: &[RunReport]) -> Vec<SummaryRow> {
    let mut names: Vec<(String, EntryKind)> = Vec::new();
    for e in runs.iter().flat_map(|r| &r.entries) {
        if !names.iter().any(|(n, _)| *n == e.name) {
            names.push((e.name.clone(), e.kind));
        }
    }
    names
        .into_iter()
        .map(|(name, kind)| {
            let entries: Vec<&RunEntry> = runs.iter().flat_map(|r| &r.entries).filter(|e| e.name == name).collect();
            let head = |f: fn(&HeadMetrics) -> Option<f64>| mean_of(entries.iter().filter_map(|e| e.head_metrics.as_ref().and_then(f)));
            let means: Vec<f64> = entries.iter().map(|e| e.abs_diff.mean).collect();
            let mean = mean_of(means.iter().copied()).expect("at least one entry");
            let mean_spread = if means.len() > 1 {
                (means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (means.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                runs: entries.len(),
                accuracy: head(|h| if let HeadMetrics::Classification { accuracy, .. } = h { Some(*accuracy) } else { None }),
                scc: head(|h| if let HeadMetrics::Classification { scc, .. } = h { Some(*scc) } else { None }),
                mape: head(|h| if let HeadMetrics::Regression { mape, .. } = h { *mape } else { None }),
                mse: head(|h| if let HeadMetrics::Regression { mse, .. } = h { Some(*mse) } else { None }),
                mean,
                std: mean_of(entries.iter().map(|e| e.abs_diff.std)).expect("non-empty"),
                max: mean_of(entries.iter().map(|e| e.abs_diff.max)).expect("non-empty"),
                mean_spread,
                bands: CapBand::ALL
                    .iter()
                    .enumerate()
                    .map(|(i, &b)| (b, mean_of(entries.iter().filter_map(|e| e.bands[i].abs_diff.map(|a| a.mean)))))
                    .collect(),
                name,
                kind,
            }
        })
        .collect()
}

/// Input-row groups compared in the ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubset {
    Relevance,
    Sentiment,
    Semantic,
    All,
}

impl FeatureSubset {
    pub const ALL: [FeatureSubset; 4] =
        [FeatureSubset::Relevance, FeatureSubset::Sentiment, FeatureSubset::Semantic, FeatureSubset::All];

    pub fn name(self) -> &'static str {
        match self {
            FeatureSubset::Relevance => "X_relevance",
            FeatureSubset::Sentiment => "X_sentiment",
            FeatureSubset::Semantic => "X_semantic",
            FeatureSubset::All => "X_all",
        }
    }

    /// Positions of this subset's rows in `rows`.
    pub fn select(self, rows: &[SeriesRow]) -> Vec<usize> {
        rows.iter()
            .enumerate()
            .filter(|(_, r)| match self {
                FeatureSubset::Relevance => matches!(r, SeriesRow::RelNoise),
                FeatureSubset::Sentiment => matches!(r, SeriesRow::PosNegRelevant | SeriesRow::PosNegNoise),
                FeatureSubset::Semantic => matches!(r, SeriesRow::Cluster(_)),
                FeatureSubset::All => true,
            })
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub subset: FeatureSubset,
    pub rows: Vec<String>,
    pub summary: SummaryRow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub model: ModelSpec,
    pub config: TrainConfig,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, subset: FeatureSubset) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.subset == subset)
    }

    pub fn to_table(&self) -> String {
        let mut rows = vec![["features", "rows", "mape", "mse", "mean", "std", "max"].map(String::from).to_vec()];
        for r in &self.rows {
            let s = &r.summary;
            rows.push(vec![
                r.subset.name().to_owned(),
                r.rows.len().to_string(),
                s.mape.map_or("-".into(), |v| format!("{v:.2}")),
                s.mse.map_or("-".into(), |v| format!("{v:.2}")),
                format!("{:.2}", s.mean),
                format!("{:.2}", s.std),
                format!("{:.2}", s.max),
            ]);
        }
        align(&rows)
    }
}

/// Runs the protocol once per feature subset with the same splits and seeds.
/// `model` defaults to the deep CNN regressor.
pub fn ablation(series: &[CompanyYearSeries], model: Option<ModelSpec>, cfg: &TrainConfig) -> Result<AblationReport> {
    let first = series.first().ok_or(EsgError::EmptySplit("dataset"))?;
    let template = model.unwrap_or_else(|| ModelSpec::new(Arch::DeepCnn, Head::Regression));
    let mut rows = Vec::with_capacity(FeatureSubset::ALL.len());
    for subset in FeatureSubset::ALL {
        let picked = subset.select(&first.rows);
        if picked.is_empty() {
            return Err(EsgError::Validation(format!("dataset has no {} rows", subset.name())));
        }
        let reduced: Vec<CompanyYearSeries> = series.iter().map(|s| s.select_rows(&picked)).collect();
        let spec = template.clone().with_input_rows(picked.len());
        let report = run_protocol(&reduced, std::slice::from_ref(&spec), None, cfg)?;
        let summary = report.summary_row(&spec.label()).cloned().expect("model row present");
        rows.push(AblationRow { subset, rows: report.header.rows, summary });
    }
    Ok(AblationReport { model: template, config: cfg.clone(), rows })
}
