//! Dense classifier placed on top of the pooled backbone features:
//! batch norm → dense + ReLU → dropout → dense (class logits).

use candle_core::Tensor;
use candle_nn::VarBuilder;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{BatchNorm, Dense, Pass};
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierHeadConfig {
    pub hidden_units: usize,
    pub dropout_rate: f64,
    pub num_classes: usize,
    pub use_batchnorm: bool,
}

impl Default for ClassifierHeadConfig {
    fn default() -> Self {
        Self {
            hidden_units: 256,
            dropout_rate: 0.3,
            num_classes: 4,
            use_batchnorm: true,
        }
    }
}

impl ClassifierHeadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_units == 0 {
            return Err(Error::config("hidden_units must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::config(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        Ok(())
    }
}

/// How a forward pass treats batch norm and dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Running statistics, no dropout. Deterministic.
    Inference,
    /// Batch statistics, dropout mask drawn from `dropout_seed`.
    Train { dropout_seed: u64 },
}

impl Mode {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train { .. })
    }

    pub fn pass(&self) -> Pass {
        Pass::from_train(self.is_train())
    }
}

#[derive(Debug, Clone)]
pub struct ClassifierHead {
    bn: Option<BatchNorm>,
    hidden: Dense,
    out: Dense,
    dropout_rate: f64,
}

impl ClassifierHead {
    /// Variables live under `vb` as `bn.*`, `dense1.*`, `dense2.*`.
    pub fn new(vb: VarBuilder, in_features: usize, cfg: &ClassifierHeadConfig) -> Result<Self> {
        cfg.validate()?;
        let bn = if cfg.use_batchnorm {
            Some(BatchNorm::new(vb.pp("bn"), in_features)?)
        } else {
            None
        };
        let hidden = Dense::new(vb.pp("dense1"), in_features, cfg.hidden_units)?;
        let out = Dense::new(vb.pp("dense2"), cfg.hidden_units, cfg.num_classes)?;
        Ok(Self {
            bn,
            hidden,
            out,
            dropout_rate: cfg.dropout_rate,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.out.out_features()
    }

    pub fn in_features(&self) -> usize {
        self.hidden.in_features()
    }

    /// Class logits, `(B, num_classes)`.
    pub fn forward(&self, features: &Tensor, mode: Mode) -> Result<Tensor> {
        let pass = mode.pass();
        let mut x = features.clone();
        if let Some(bn) = &self.bn {
            x = bn.forward(&x, pass)?;
        }
        let mut x = self.hidden.forward(&x, pass)?.relu()?;
        if let Mode::Train { dropout_seed } = mode {
            if self.dropout_rate > 0.0 {
                x = self.dropout(&x, dropout_seed)?;
            }
        }
        Ok(self.out.forward(&x, pass)?)
    }

    // Inverted dropout with a host-generated mask, so training is reproducible.
    fn dropout(&self, x: &Tensor, dropout_seed: u64) -> Result<Tensor> {
        let keep = 1.0 - self.dropout_rate;
        let mut rng = seed::rng(dropout_seed, seed::DROPOUT, &[]);
        let n = x.elem_count();
        let mask: Vec<f32> = (0..n)
            .map(|_| if rng.random::<f64>() < keep { (1.0 / keep) as f32 } else { 0.0 })
            .collect();
        let mask = Tensor::from_vec(mask, x.shape(), x.device())?.to_dtype(x.dtype())?;
        Ok(x.mul(&mask)?)
    }
}
