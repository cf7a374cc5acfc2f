//! Experiment configuration: one TOML document with nested sections.
//! Unknown keys are hard errors so a typo cannot silently corrupt a sweep.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detection::{Cascade, ClassifierSettings, DetectorConfig};
use crate::error::{Error, Result};
use crate::memory::MemoryStore;
use crate::scenario::{DetectorChoice, StreamConfig};
use crate::seeding::component_seed;
use crate::task_model::{TaskModel, TrainConfig};

/// Geometry of auto-generated synthetic tasks.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    /// Distance of every class mean from the origin.
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
}

fn default_separation() -> f64 {
    6.0
}

fn default_noise_std() -> f64 {
    1.0
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            separation: default_separation(),
            noise_std: default_noise_std(),
        }
    }
}

/// Memory-buffer settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MemoryConfig {
    #[serde(default = "default_capacity")]
    pub capacity_per_task: usize,
}

fn default_capacity() -> usize {
    200
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            capacity_per_task: default_capacity(),
        }
    }
}

/// The resolved description of one experiment; a run is a pure function
/// of this document.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub strategy: DetectorChoice,
    /// Output directory for round logs, metrics and the config snapshot.
    pub out_dir: PathBuf,
    /// Optional CSV of pre-extracted features replacing synthetic tasks.
    pub feature_file: Option<PathBuf>,
    pub stream: StreamConfig,
    pub synthetic: SyntheticConfig,
    pub detector: DetectorConfig,
    pub classifier: ClassifierSettings,
    pub memory: MemoryConfig,
    pub model: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            strategy: DetectorChoice::H2st,
            out_dir: PathBuf::from("out"),
            feature_file: None,
            stream: StreamConfig::default(),
            synthetic: SyntheticConfig::default(),
            detector: DetectorConfig::default(),
            classifier: ClassifierSettings::default(),
            memory: MemoryConfig::default(),
            model: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses a TOML document; unknown keys are rejected.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ConfigParse(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.stream.validate()?;
        self.detector.validate()?;
        if !(self.synthetic.separation > 0.0) || !(self.synthetic.noise_std > 0.0) {
            return Err(Error::InvalidConfig(
                "separation and noise_std must be positive".into(),
            ));
        }
        if self.memory.capacity_per_task == 0 {
            return Err(Error::InvalidConfig("capacity_per_task must be >= 1".into()));
        }
        Ok(())
    }

    /// Seed for a named component, derived from the root seed.
    pub fn seed_for(&self, label: &str) -> u64 {
        component_seed(self.seed, label)
    }

    /// Builds the untrained task model with its derived seed.
    pub fn build_model(&self, input_dim: usize) -> Result<TaskModel> {
        let mut config = self.model.clone();
        config.seed = self.seed_for("model");
        TaskModel::new(input_dim, config)
    }

    /// Builds the empty memory store with its derived seed.
    pub fn build_store(&self) -> MemoryStore {
        MemoryStore::new(self.memory.capacity_per_task, self.seed_for("memory"))
    }

    /// Builds the empty cascade when the strategy is cascade-based.
    pub fn build_cascade(&self) -> Result<Option<Cascade>> {
        match self.strategy.strategy() {
            Some(strategy) => Ok(Some(Cascade::new(
                strategy,
                self.detector,
                self.classifier.clone(),
                self.seed_for("cascade"),
            )?)),
            None => Ok(None),
        }
    }
}
