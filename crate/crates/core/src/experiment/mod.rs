//! Training, evaluation, baselines and the repeated-split protocol.

mod control;
mod metrics;
mod protocol;
mod train;

pub use control::{simulate, EpochDecision, Simulation, TrainControl};
pub use metrics::{
    abs_diff_metrics, baseline_mean, baseline_random, baseline_sokolov, sokolov_rating, split, AbsDiff, HeadMetrics,
    SokolovRatings, Split,
};
pub use protocol::{
    ablation, apply_split_scaler, run_protocol, AblationReport, AblationRow, BandMetrics, EntryKind, EvalReport, FeatureSubset,
    ReportHeader, RunEntry, RunReport, SummaryRow,
};
pub use train::{evaluate, train, EpochRecord, Evaluation, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{EsgError, Result};
use crate::models::{Arch, Head, ModelSpec};

/// Floating point type networks are trained in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl std::str::FromStr for Precision {
    type Err = EsgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => Err(EsgError::Validation(format!("unknown precision {s:?} (f32|f64)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Replaces `max_epochs` for the deep transformer with a regression head.
    pub max_epochs_deep_transformer_regression: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub es_patience: usize,
    pub lr_patience: usize,
    pub lr_factor: f64,
    pub lr_min_delta: f64,
    pub split_seed: u64,
    /// Share of series used for training plus validation; the rest is test.
    pub train_fraction: f64,
    /// Share of the training partition held out for validation.
    pub val_fraction_of_train: f64,
    pub n_runs: usize,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 25,
            max_epochs_deep_transformer_regression: 50,
            batch_size: 16,
            lr: 1e-3,
            es_patience: 5,
            lr_patience: 5,
            lr_factor: 0.1,
            lr_min_delta: 0.01,
            split_seed: 0,
            train_fraction: 0.8,
            val_fraction_of_train: 0.2,
            n_runs: 10,
            precision: Precision::F32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fraction = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(EsgError::Validation(format!("{name} must be in (0, 1), got {v}")))
            }
        };
        fraction("train_fraction", self.train_fraction)?;
        fraction("val_fraction_of_train", self.val_fraction_of_train)?;
        fraction("lr_factor", self.lr_factor)?;
        if self.es_patience == 0 || self.lr_patience == 0 {
            return Err(EsgError::Validation("patience must be at least 1".into()));
        }
        if self.batch_size == 0 || self.n_runs == 0 || self.max_epochs == 0 || self.max_epochs_deep_transformer_regression == 0 {
            return Err(EsgError::Validation("batch_size, n_runs and epoch limits must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.lr_min_delta < 0.0 {
            return Err(EsgError::Validation("lr must be positive and lr_min_delta non-negative".into()));
        }
        Ok(())
    }

    pub fn epochs_for(&self, spec: &ModelSpec) -> usize {
        match (spec.arch, spec.head) {
            (Arch::CnnDeepTransformer, Head::Regression) => self.max_epochs_deep_transformer_regression,
            _ => self.max_epochs,
        }
    }
}
