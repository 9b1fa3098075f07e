//! TOML configuration. Every key is optional and falls back to the defaults
//! used by the command line. Credentials are never stored here, only the
//! names of the environment variables that hold them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::DEFAULT_DIM;
use crate::scoring::UtilityWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexBackend {
    #[default]
    Memory,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    pub url: String,
    pub key_env: String,
    pub model: String,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            url: "http://localhost:8080/v1".into(),
            key_env: "EMBEDDING_API_KEY".into(),
            model: "text-embedding-3-small".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexConfig {
    pub backend: IndexBackend,
    pub dim: usize,
    pub remote: RemoteConfig,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            backend: IndexBackend::Memory,
            dim: DEFAULT_DIM,
            remote: RemoteConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub budget: usize,
    pub buffer: usize,
    pub k: usize,
    pub max_iterations: usize,
}

impl Default for ControllerSection {
    fn default() -> Self {
        ControllerSection {
            budget: 3000,
            buffer: 2,
            k: 3,
            max_iterations: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptiveKSection {
    pub pool: usize,
}

impl Default for AdaptiveKSection {
    fn default() -> Self {
        AdaptiveKSection { pool: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub url: String,
    pub key_env: String,
    pub model: String,
    pub judge_model: String,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            url: "http://localhost:8080/v1".into(),
            key_env: "ORACLE_API_KEY".into(),
            model: "gpt-4o-mini".into(),
            judge_model: "gpt-4o-mini".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub index: IndexConfig,
    pub weights: UtilityWeights,
    pub controller: ControllerSection,
    pub adaptive_k: AdaptiveKSection,
    pub oracle: OracleConfig,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.index.dim == 0 {
            return Err(Error::Config("index.dim must be positive".into()));
        }
        self.weights.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.controller.budget == 0 || self.controller.k == 0 || self.controller.max_iterations == 0 {
            return Err(Error::Config(
                "controller.budget, controller.k and controller.max_iterations must be positive".into(),
            ));
        }
        if self.adaptive_k.pool == 0 {
            return Err(Error::Config("adaptive_k.pool must be positive".into()));
        }
        Ok(())
    }
}
