use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Quantity watched by plateau decay, early stopping and best-checkpoint selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    ValLoss,
    ValAccuracy,
}

impl Monitor {
    pub fn higher_is_better(self) -> bool {
        matches!(self, Monitor::ValAccuracy)
    }

    /// `candidate` beats `best` by more than `min_delta`.
    pub fn improves(self, candidate: f64, best: f64, min_delta: f64) -> bool {
        if candidate.is_nan() {
            return false;
        }
        if self.higher_is_better() {
            candidate - min_delta > best
        } else {
            candidate + min_delta < best
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "val_loss" => Some(Monitor::ValLoss),
            "val_accuracy" | "val_acc" => Some(Monitor::ValAccuracy),
            _ => None,
        }
    }
}

impl fmt::Display for Monitor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Monitor::ValLoss => "val_loss",
            Monitor::ValAccuracy => "val_accuracy",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub monitor: Monitor,
    /// An epoch only counts as an improvement if it beats the best by more than this.
    pub min_delta: f64,
    /// Batches prepared ahead of the optimiser.
    pub prefetch: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 1e-4,
            plateau_factor: 0.1,
            plateau_patience: 5,
            early_stop_patience: 5,
            max_epochs: 50,
            seed: 0,
            monitor: Monitor::ValLoss,
            min_delta: 0.0,
            prefetch: 2,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::config(format!("plateau_factor must be in (0, 1), got {}", self.plateau_factor)));
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return Err(Error::config("patience values must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs must be at least 1"));
        }
        if !(self.min_delta.is_finite() && self.min_delta >= 0.0) {
            return Err(Error::config(format!("min_delta must be non-negative, got {}", self.min_delta)));
        }
        Ok(())
    }
}
