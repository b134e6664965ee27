//! JSON experiment configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use tfish_core::{AdaptationSpec, EncoderModel, FeatureConfig, FilterMode, ModelConfig};

use crate::dataset::DatasetSpec;
use crate::error::{HarnessError, Result};

/// Deepest filtered block used when none is given.
pub const DEFAULT_ENDING_BLOCK: usize = 0;
pub const DEFAULT_RIDGE_LAMBDA: f64 = 1e-1;
pub const DEFAULT_MODEL_SEEDS: [u64; 3] = [0, 1, 2];

/// Adaptation settings as written in a config file; `cutoff_bin` is derived
/// from `cutoff_hz` unless pinned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptationConfig {
    pub cutoff_hz: f64,
    pub cutoff_bin: Option<usize>,
    pub ending_block: usize,
    pub include_embedding: bool,
    pub mode: FilterMode,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self {
            cutoff_hz: 1000.0,
            cutoff_bin: None,
            ending_block: DEFAULT_ENDING_BLOCK,
            include_embedding: true,
            mode: FilterMode::Band,
        }
    }
}

impl AdaptationConfig {
    pub fn resolve(&self, model: &EncoderModel) -> Result<AdaptationSpec> {
        let mut a = AdaptationSpec::from_cutoff(model, self.cutoff_hz, self.ending_block)?;
        if let Some(bin) = self.cutoff_bin {
            a = a.with_bin(bin);
        }
        a.include_embedding = self.include_embedding;
        a.mode = self.mode;
        a.validate(model)?;
        Ok(a)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub model: ModelConfig,
    pub features: FeatureConfig,
    pub adaptation: AdaptationConfig,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.features.validate()?;
        self.model.validate(&self.features)?;
        if self.dataset.sample_rate_hz != self.features.sample_rate_hz {
            return Err(HarnessError::Config(format!(
                "dataset rate {} Hz differs from feature rate {} Hz",
                self.dataset.sample_rate_hz, self.features.sample_rate_hz
            )));
        }
        if self.dataset.num_classes != self.model.num_classes {
            return Err(HarnessError::Config(format!(
                "dataset has {} classes, model has {}",
                self.dataset.num_classes, self.model.num_classes
            )));
        }
        if self.adaptation.ending_block >= self.model.num_blocks {
            return Err(HarnessError::Config(format!(
                "ending_block {} out of range for {} blocks",
                self.adaptation.ending_block, self.model.num_blocks
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        let cfg: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_sections_merge_with_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"model": {"seed": 4}, "adaptation": {"ending_block": 2}}"#).unwrap();
        assert_eq!(cfg.model.seed, 4);
        assert_eq!(cfg.model.embed_dim, ModelConfig::default().embed_dim);
        assert_eq!(cfg.adaptation.ending_block, 2);
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"adaptation": {"cutof_hz": 1}}"#).is_err());
    }

    #[test]
    fn ending_block_range_checked() {
        let mut cfg = ExperimentConfig::default();
        cfg.adaptation.ending_block = cfg.model.num_blocks;
        assert!(cfg.validate().is_err());
    }
}
