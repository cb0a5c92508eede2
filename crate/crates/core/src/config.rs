//! One JSON document configuring every pipeline stage. Missing fields take
//! their defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clustering::KMeansConfig;
use crate::corpus::CleanConfig;
use crate::error::Result;
use crate::experiment::TrainConfig;
use crate::features::FeatureConfig;
use crate::gdelt::{DEFAULT_COMBINATION, DEFAULT_ENDPOINT, MAX_RECORDS_LIMIT};
use crate::models::{Arch, Head, ModelSpec};
use crate::synth::SynthConfig;
use crate::weak_label::WeakLabelConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub endpoint: String,
    /// Keyword template; `{0}`..`{4}` are the three company names and two
    /// ESG terms.
    pub combination: String,
    pub max_records: usize,
    pub requests_per_second: f64,
    pub retry_attempts: u32,
    /// Raw responses are kept here when set.
    pub archive_dir: Option<PathBuf>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            endpoint: DEFAULT_ENDPOINT.to_owned(),
            combination: DEFAULT_COMBINATION.to_owned(),
            max_records: MAX_RECORDS_LIMIT,
            requests_per_second: 1.0,
            retry_attempts: 3,
            archive_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub year: i32,
    pub ingest: IngestConfig,
    pub clean: CleanConfig,
    pub weak_label: WeakLabelConfig,
    pub clustering: KMeansConfig,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub models: Vec<ModelSpec>,
    pub synth: SynthConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            year: 2020,
            ingest: IngestConfig::default(),
            clean: CleanConfig::default(),
            weak_label: WeakLabelConfig::default(),
            clustering: KMeansConfig::default(),
            features: FeatureConfig::default(),
            train: TrainConfig::default(),
            models: default_models(),
            synth: SynthConfig::default(),
        }
    }
}

/// Every architecture with both heads.
pub fn default_models() -> Vec<ModelSpec> {
    Arch::ALL
        .into_iter()
        .flat_map(|a| [Head::Regression, Head::classification()].map(|h| ModelSpec::new(a, h)))
        .collect()
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.weak_label.validate()?;
        self.train.validate()?;
        self.synth.validate()?;
        for m in &self.models {
            m.validate()?;
        }
        Ok(())
    }
}
