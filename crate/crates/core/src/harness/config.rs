use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::igdr::DEFAULT_TEMPERATURE;
use crate::pdf::{DepthBinSpec, DepthLossWeights, RankingConfig};

pub const DEFAULT_SEED: u64 = 42;
pub const SEED_ENV: &str = "BEVKIT_SEED";

/// Central-difference settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FiniteDiffConfig {
    pub h: f64,
    /// Bound on `|a - fd| / max(|a|, |fd|, floor)`.
    pub tol: f64,
    pub floor: f64,
    /// Elements probed per tensor; larger tensors are subsampled.
    pub max_probe: usize,
}

impl Default for FiniteDiffConfig {
    fn default() -> Self {
        FiniteDiffConfig {
            h: 1e-5,
            tol: 1e-4,
            floor: 1e-8,
            max_probe: 64,
        }
    }
}

impl FiniteDiffConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !(self.tol > 0.0) || !(self.floor > 0.0) || self.max_probe == 0 {
            return Err(Error::invalid(
                "FiniteDiffConfig",
                format!("h, tol, floor must be > 0 and max_probe >= 1, got {self:?}"),
            ));
        }
        Ok(())
    }
}

/// Everything the harness reads from `--config`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnessConfig {
    pub ranking: RankingConfig,
    pub weights: DepthLossWeights,
    pub finite_diff: FiniteDiffConfig,
    pub temperature: f64,
    pub bins: DepthBinSpec,
    /// Step size of the trained temporal demo.
    pub lr: f64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            ranking: RankingConfig::default(),
            weights: DepthLossWeights::default(),
            finite_diff: FiniteDiffConfig::default(),
            temperature: DEFAULT_TEMPERATURE,
            bins: DepthBinSpec::default(),
            lr: 1e-2,
        }
    }
}

impl HarnessConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: HarnessConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.ranking.validate()?;
        self.weights.validate()?;
        self.finite_diff.validate()?;
        if !(self.temperature > 0.0) {
            return Err(Error::invalid("HarnessConfig", format!("temperature must be > 0, got {}", self.temperature)));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid("HarnessConfig", format!("lr must be finite and > 0, got {}", self.lr)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serialises")
    }
}

/// `BEVKIT_SEED` if set and parseable, otherwise the default.
pub fn seed_from_env() -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::invalid("seed_from_env", format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}
