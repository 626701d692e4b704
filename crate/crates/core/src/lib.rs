//! Apple leaf disease classification by transfer learning: an EfficientNetV2-S
//! feature extractor with a small dense head, runtime geometric augmentation,
//! and reproducible training and evaluation.

pub mod augmentation;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod model;
mod plot;
pub mod seed;
pub mod training;

pub use error::{Error, Result};
