//! Run configuration: model, training and data sections, loadable from a
//! structured-text (TOML) file with unknown keys rejected. The fully
//! resolved configuration is echoed into every output directory and into
//! checkpoints, so any run can be replayed byte-exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_steps: usize,
    pub lr_initial: f64,
    pub lr_final: f64,
    /// Steps without EMA-loss improvement before the learning rate drops
    /// to `lr_final`.
    pub plateau_patience: usize,
    pub eval_every: usize,
    pub log_every: usize,
    pub seed: u64,
    pub checkpoint_dir: Option<String>,
    /// Stop early once the periodic training-set evaluation reaches this
    /// sequence accuracy.
    pub target_accuracy: Option<f64>,
    /// Global-norm gradient clipping threshold.
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            max_steps: 2000,
            lr_initial: 1e-4,
            lr_final: 1e-5,
            plateau_patience: 200,
            eval_every: 50,
            log_every: 10,
            seed: 0,
            checkpoint_dir: None,
            target_accuracy: None,
            grad_clip: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.lr_final > self.lr_initial {
            return Err(Error::Config(format!(
                "lr_final {} must not exceed lr_initial {}",
                self.lr_final, self.lr_initial
            )));
        }
        if self.grad_clip <= 0.0 {
            return Err(Error::Config("grad_clip must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub manifest: String,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub image_height: usize,
    pub image_width: usize,
    /// Training sources, sampled with the given weights.
    #[serde(default)]
    pub sources: Vec<SourceConfig>,
    #[serde(default)]
    pub eval_manifest: Option<String>,
    /// Train-time augmentation (horizontal scale jitter ±10% plus mild
    /// Gaussian noise); keep off for deterministic runs.
    #[serde(default)]
    pub augment: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub data: DataConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.data.image_height == 0 || self.data.image_width == 0 {
            return Err(Error::Config("image size must be positive".into()));
        }
        Ok(())
    }
}
