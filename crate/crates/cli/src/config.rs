//! Flat TOML run configuration. Keys are the `TrainConfig` field names (with
//! `a`, `b`, `c`, `d` for the latent sizes) plus the corpus pipeline keys
//! below. Unknown keys are rejected.

use std::collections::BTreeSet;
use std::path::Path;

use mter_core::{FilterThresholds, SplitRatios, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    #[serde(flatten)]
    pub filter: FilterThresholds,
    pub rating_max: u32,
    pub train_ratio: f64,
    pub valid_ratio: f64,
    pub test_ratio: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let split = SplitRatios::default();
        Self {
            train: TrainConfig::default(),
            filter: FilterThresholds::default(),
            rating_max: 5,
            train_ratio: split.train,
            valid_ratio: split.valid,
            test_ratio: split.test,
        }
    }
}

impl RunConfig {
    pub fn split(&self) -> SplitRatios {
        SplitRatios {
            train: self.train_ratio,
            valid: self.valid_ratio,
            test: self.test_ratio,
        }
    }

    pub fn known_keys() -> BTreeSet<String> {
        match toml::Value::try_from(RunConfig::default()) {
            Ok(toml::Value::Table(t)) => t.keys().cloned().collect(),
            _ => unreachable!("RunConfig serializes to a table"),
        }
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let table: toml::Table = toml::from_str(text)?;
        let known = Self::known_keys();
        let unknown: Vec<&String> = table.keys().filter(|k| !known.contains(*k)).collect();
        if !unknown.is_empty() {
            anyhow::bail!("unknown config keys: {unknown:?}");
        }
        Ok(toml::Value::Table(table).try_into()?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    }

    pub fn validate(&self) -> mter_core::Result<()> {
        self.train.validate()?;
        self.split().validate()?;
        if self.rating_max < 2 {
            return Err(mter_core::MterError::Config(format!(
                "rating_max must be >= 2, got {}",
                self.rating_max
            )));
        }
        Ok(())
    }
}
