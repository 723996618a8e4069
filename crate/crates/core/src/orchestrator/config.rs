use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::Language;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Worker count and per-task time limit of one pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSpec {
    pub workers: usize,
    /// Seconds.
    pub time_limit: f64,
}

impl PoolSpec {
    pub fn limit(&self) -> Duration {
        Duration::from_secs_f64(self.time_limit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolConfig {
    pub standard: PoolSpec,
    /// Zero workers disables rerouting.
    pub longrun: PoolSpec,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            standard: PoolSpec { workers: 4, time_limit: 3600.0 },
            longrun: PoolSpec { workers: 1, time_limit: 4.0 * 3600.0 },
        }
    }
}

impl PoolConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.standard.workers == 0 {
            return Err(ConfigError::Invalid("standard pool needs at least one worker".into()));
        }
        let ok = |t: f64| t.is_finite() && t > 0.0;
        if !ok(self.standard.time_limit) || !ok(self.longrun.time_limit) {
            return Err(ConfigError::Invalid("time limits must be positive".into()));
        }
        if self.longrun.workers > 0 && self.longrun.time_limit <= self.standard.time_limit {
            return Err(ConfigError::Invalid("the long-run limit must exceed the standard limit".into()));
        }
        Ok(())
    }
}

/// `cost = alpha * lines + beta * files`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    pub alpha: f64,
    pub beta: f64,
}

/// Orchestrator settings, read from TOML:
///
/// ```toml
/// cache_bytes = 67108864
/// hdt_threshold = 5000000.0
///
/// [pools.standard]
/// workers = 4
/// time_limit = 3600.0
///
/// [pools.longrun]
/// workers = 1
/// time_limit = 14400.0
///
/// [cost.python]
/// alpha = 1.0
/// beta = 50.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub pools: PoolConfig,
    pub cost: BTreeMap<Language, CostModel>,
    /// Byte budget of the on-disk result cache.
    pub cache_bytes: u64,
    /// Tasks estimated at or above this cost start on the long-run pool.
    pub hdt_threshold: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            pools: PoolConfig::default(),
            cost: BTreeMap::from([
                (Language::Python, CostModel { alpha: 1.0, beta: 50.0 }),
                (Language::Xml, CostModel { alpha: 0.25, beta: 10.0 }),
            ]),
            cache_bytes: 64 << 20,
            hdt_threshold: 5.0e6,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let c: Config = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.pools.validate()?;
        for (l, m) in &self.cost {
            if !(m.alpha >= 0.0 && m.beta >= 0.0 && m.alpha.is_finite() && m.beta.is_finite()) {
                return Err(ConfigError::Invalid(format!("cost constants for {l} must be non-negative")));
            }
        }
        if self.hdt_threshold.is_nan() {
            return Err(ConfigError::Invalid("hdt_threshold is not a number".into()));
        }
        Ok(())
    }

    pub fn cost_model(&self, language: Language) -> CostModel {
        self.cost.get(&language).copied().unwrap_or_else(|| Config::default().cost[&language])
    }
}
