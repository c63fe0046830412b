//! Experiment configuration: one TOML document holding the scenario, the
//! open-loop sweep and the training settings, plus the built-in presets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::TrainConfig;
use crate::scenario::{ScenarioConfig, Sweep};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Source of all randomness: sweep noise, data split, weight init.
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub collect: Sweep,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_seed() -> u64 {
    1
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.set_seed(cfg.seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = super::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = preset_text(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown preset `{name}`; known: {}",
                PRESETS.join(", ")
            ))
        })?;
        Self::from_toml(text)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.lm.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.collect.validate()?;
        self.train.lm.validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

pub const PRESETS: [&str; 5] = ["exp1", "exp1-slow", "exp2", "exp2-wide", "exp3"];

pub fn preset_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "exp1" => include_str!("../../presets/exp1.toml"),
        "exp1-slow" => include_str!("../../presets/exp1-slow.toml"),
        "exp2" => include_str!("../../presets/exp2.toml"),
        "exp2-wide" => include_str!("../../presets/exp2-wide.toml"),
        "exp3" => include_str!("../../presets/exp3.toml"),
        _ => return None,
    })
}
