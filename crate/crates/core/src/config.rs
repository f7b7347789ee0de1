//! Run configuration: one TOML document in which every omitted field takes
//! its default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corrgen::PanelConfig;
use crate::error::{Error, Result};
use crate::eval::RobustnessConfig;
use crate::io;
use crate::neuralnet::TrainConfig;
use crate::pipeline::ArimaStageConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// Wide price table: a date column followed by one column per ticker.
    pub prices: Option<PathBuf>,
    /// `ticker,sector` file for the multi-group model.
    pub sectors: Option<PathBuf>,
    pub delimiter: char,
    /// Tickers missing a larger share of dates than this are dropped.
    pub max_missing_ratio: f64,
    /// Tickers with a longer run of consecutive missing dates are dropped.
    pub max_gap: usize,
    pub universe_size: usize,
    pub universe_seed: u64,
    /// Column used as the single-index market return instead of the
    /// equal-weighted portfolio mean; never sampled into the universe.
    pub market_ticker: Option<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            prices: None,
            sectors: None,
            delimiter: ',',
            max_missing_ratio: 0.01,
            max_gap: 5,
            universe_size: 150,
            universe_seed: 0,
            market_ticker: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// Log returns instead of simple returns for the market model.
    pub log_returns: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub panel: PanelConfig,
    pub arima: ArimaStageConfig,
    pub train: TrainConfig,
    pub baselines: BaselineConfig,
    pub robustness: RobustnessConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&io::read_text(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies one seed to universe sampling, training and resampling.
    pub fn set_seed(&mut self, seed: u64) {
        self.data.universe_seed = seed;
        self.train.seed = seed;
        self.robustness.seed = seed;
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(hex::encode(digest)[..16].to_string())
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if !(0.0..=1.0).contains(&d.max_missing_ratio) {
            return Err(Error::Config("data.max_missing_ratio must lie in [0, 1]".into()));
        }
        if d.universe_size < 2 {
            return Err(Error::Config("data.universe_size must be at least 2".into()));
        }
        for p in [&d.prices, &d.sectors].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::MissingArtifact(p.clone()));
            }
        }
        let p = &self.panel;
        if p.window < 2 || p.stride == 0 || p.offsets.is_empty() || p.offsets.contains(&0) {
            return Err(Error::Config("panel needs window >= 2, stride >= 1 and 1-based offsets".into()));
        }
        if p.steps < crate::corrgen::SLICE_LEN + 3 {
            return Err(Error::Config(format!(
                "panel.steps must be at least {} for four walk-forward slices",
                crate::corrgen::SLICE_LEN + 3
            )));
        }
        if self.arima.candidates.is_empty() {
            return Err(Error::Config("arima.candidates is empty".into()));
        }
        if self.robustness.sample_size < 2 {
            return Err(Error::Config("robustness.sample_size must be at least 2".into()));
        }
        self.train.validate()
    }
}
