//! Run configuration shared by every subcommand, read from TOML or JSON.
//!
//! ```toml
//! [model]
//! variant = "plain"
//! num_polygons = 20
//!
//! [train]
//! epochs = 100
//! lambda_coord = 5.0
//!
//! [data]
//! scenes = 500
//! ```

use std::path::Path;

use floorplan_core::baseline::BaselineConfig;
use floorplan_core::eval::EvalThresholds;
use floorplan_core::synth::SynthConfig;
use floorplan_nn::train::TrainConfig;
use floorplan_nn::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Scenes written by `generate`.
    pub scenes: usize,
    /// Base seed; scene `i` uses `seed + i`.
    pub seed: u64,
    pub synth: SynthConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            scenes: 500,
            seed: 0,
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub eval: EvalThresholds,
    pub baseline: BaselineConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `.json` files as JSON and everything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text),
            _ => Self::from_toml(&text),
        }
        .map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.train.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.data.synth.map_size != self.model.input_size {
            return Err(Error::Config(format!(
                "data.synth.map_size ({}) must equal model.input_size ({})",
                self.data.synth.map_size, self.model.input_size
            )));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}
