use std::path::{Path, PathBuf};

use lact_nn::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training hyperparameters; JSON files use these field names and may omit
/// any of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Dataset directory written by dataset generation.
    pub dataset: PathBuf,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Candidate window spans in degrees.
    pub angular_ranges: Vec<f64>,
    /// Relative probability of each span; normalized internally.
    pub range_weights: Vec<f64>,
    /// Draw spans uniformly from [30°, 90°] on the 0.5° grid instead.
    pub uniform_range_mode: bool,
    /// Train on a single span only.
    pub fixed_range: Option<f64>,
    pub seed: u64,
    /// Evaluate on the holdout split every this many epochs (0 = never).
    pub eval_every: usize,
    /// Trailing fraction of the dataset kept out of training.
    pub holdout_fraction: f64,
    /// Train on at most this many leading samples.
    pub max_train_samples: Option<usize>,
    /// Stop after exactly this many parameter updates, cycling epochs as
    /// needed (overrides `epochs`).
    pub max_steps: Option<u64>,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("data"),
            epochs: 30,
            batch_size: 8,
            lr: 1e-4,
            angular_ranges: vec![30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0],
            range_weights: vec![7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0],
            uniform_range_mode: false,
            fixed_range: None,
            seed: 0,
            eval_every: 1,
            holdout_fraction: 0.01,
            max_train_samples: None,
            max_steps: None,
            model: ModelConfig::desk(),
        }
    }
}

impl TrainConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad(format!("lr must be finite and >= 0, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad(format!("holdout_fraction must be in [0, 1), got {}", self.holdout_fraction));
        }
        if self.fixed_range.is_none() && !self.uniform_range_mode {
            if self.angular_ranges.is_empty() || self.angular_ranges.len() != self.range_weights.len() {
                return bad(format!(
                    "{} angular ranges with {} weights",
                    self.angular_ranges.len(),
                    self.range_weights.len()
                ));
            }
            if self.range_weights.iter().any(|&w| !(w.is_finite() && w > 0.0)) {
                return bad("range weights must be positive".into());
            }
        }
        let spans: Vec<f64> = self.fixed_range.into_iter().chain(self.angular_ranges.iter().copied()).collect();
        for s in spans {
            if !(lact_core::AngularWindow::MIN_SPAN_DEG..=lact_core::AngularWindow::MAX_SPAN_DEG).contains(&s) {
                return bad(format!("span {s}° outside [30°, 90°]"));
            }
        }
        self.model.validate()?;
        Ok(())
    }
}
