use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::losses::LossConfig;
use crate::numerics::AdamConfig;
use crate::planner::{Ablation, ModelConfig};
use crate::scenario::{GridConfig, IntervalMode};

/// Environment variable naming the config file used when `--config` is
/// absent.
pub const CONFIG_ENV: &str = "MAPPLAN_CONFIG";

/// Everything a training or evaluation run depends on. Every field has a
/// default, so an empty file is a valid config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub ablation: Ablation,
    pub interval_mode: IntervalMode,
    /// Directory of scene files used for training.
    pub train_data: Option<PathBuf>,
    /// Directory of scene files for the per-epoch validation ADE.
    pub val_data: Option<PathBuf>,
    pub grid: GridConfig,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub optimizer: AdamConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            epochs: 30,
            batch_size: 8,
            ablation: Ablation::Full,
            interval_mode: IntervalMode::ActualDt,
            train_data: None,
            val_data: None,
            grid: GridConfig::default(),
            model: ModelConfig::default(),
            loss: LossConfig::default(),
            optimizer: AdamConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg = Self::from_toml(&text, path)?;
        cfg.validate().map_err(|message| CliError::Config {
            path: path.to_path_buf(),
            message,
        })?;
        Ok(cfg)
    }

    /// `path`, else `$MAPPLAN_CONFIG`, else the defaults.
    pub fn resolve(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.batch_size == 0 {
            return Err("batch_size must be positive".into());
        }
        self.model.validate().map_err(|e| e.to_string())?;
        self.loss.validate().map_err(|e| e.to_string())?;
        if !(self.optimizer.lr > 0.0) {
            return Err(format!("optimizer.lr must be positive, got {}", self.optimizer.lr));
        }
        for g in [&self.grid.bev, &self.grid.region] {
            g.validate().map_err(|e| e.to_string())?;
        }
        for p in [&self.train_data, &self.val_data].into_iter().flatten() {
            if !p.exists() {
                return Err(format!("data path {} does not exist", p.display()));
            }
        }
        Ok(())
    }
}
