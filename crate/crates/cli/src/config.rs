//! Run configuration: one TOML file with a table per stage. Flags override it.

use std::path::Path;

use hpm_core::pipeline::Protocol;
use hpm_core::policy::{PolicyArchitecture, TrainConfig};
use hpm_core::sim::GeneratorConfig;
use hpm_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: usize,
    pub mlp: Vec<usize>,
    pub components: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let arch = PolicyArchitecture::default();
        ModelConfig {
            hidden: arch.hidden,
            mlp: arch.mlp,
            components: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    /// Rollouts per sampled forecast.
    pub samples: usize,
    /// Grid points per density marginal.
    pub density_points: usize,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig {
            samples: 1000,
            density_points: 201,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub generator: GeneratorConfig,
    pub protocol: Protocol,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub forecast: ForecastConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}
