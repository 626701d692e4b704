use std::sync::Arc;

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::augmentation::{augmented_stream, AugmentationPolicy, BatchLoader, EpochStats};
use crate::dataset::LabeledPath;
use crate::model::{ModelBundle, Mode, Normalization};
use crate::{Error, Result};

/// Anything that maps a preprocessed batch to class probabilities.
///
/// [`ModelBundle`] is the real implementation; tests plug in synthetic ones.
pub trait Classifier: Sync {
    fn class_names(&self) -> &[String];
    /// `(height, width)` the inputs are resized to.
    fn input_size(&self) -> (u32, u32);
    fn normalization(&self) -> Normalization;
    /// `(B, 3, H, W)` → `(B, C)` probabilities.
    fn predict_batch(&self, inputs: &Tensor) -> Result<Tensor>;
    /// `(B, 3, H, W)` → `(B, D)` feature vectors for similarity search.
    fn embed_batch(&self, inputs: &Tensor) -> Result<Tensor>;
}

impl Classifier for ModelBundle {
    fn class_names(&self) -> &[String] {
        &self.class_names
    }

    fn input_size(&self) -> (u32, u32) {
        self.input_resolution()
    }

    fn normalization(&self) -> Normalization {
        self.preprocess.normalization
    }

    fn predict_batch(&self, inputs: &Tensor) -> Result<Tensor> {
        self.forward(inputs)
    }

    fn embed_batch(&self, inputs: &Tensor) -> Result<Tensor> {
        self.features(inputs, Mode::Inference)
    }
}

/// Test-time augmentation: average the original and `views - 1` augmented copies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TtaConfig {
    /// Total views per image, the unaugmented one included.
    pub views: usize,
    pub seed: u64,
    pub policy: AugmentationPolicy,
}

impl Default for TtaConfig {
    fn default() -> Self {
        Self {
            views: 5,
            seed: 0,
            policy: AugmentationPolicy::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PredictOptions {
    pub batch_size: usize,
    pub tta: Option<TtaConfig>,
    pub strict: bool,
    pub prefetch: usize,
}

impl Default for PredictOptions {
    fn default() -> Self {
        Self {
            batch_size: 32,
            tta: None,
            strict: false,
            prefetch: 2,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Predictions {
    /// One probability row per decoded image.
    pub probs: Vec<Vec<f32>>,
    pub labels: Vec<u32>,
    /// Position of each row's image in the input list.
    pub indices: Vec<usize>,
    pub stats: EpochStats,
    pub views: usize,
}

impl Predictions {
    pub fn predicted(&self) -> Vec<usize> {
        self.probs.iter().map(|row| argmax(row)).collect()
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn accuracy(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let correct = self
            .predicted()
            .iter()
            .zip(&self.labels)
            .filter(|(p, l)| **p == **l as usize)
            .count();
        correct as f64 / self.len() as f64
    }
}

/// Index of the largest value; the earliest wins ties.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

fn run_view(
    clf: &dyn Classifier,
    samples: &Arc<[LabeledPath]>,
    policy: &AugmentationPolicy,
    seed: u64,
    view: u64,
    opts: &PredictOptions,
) -> Result<Predictions> {
    let stream = augmented_stream(samples.clone(), policy, seed, view, clf.input_size(), false).strict(opts.strict);
    let mut loader = BatchLoader::spawn(stream, opts.batch_size, clf.normalization(), opts.prefetch);
    let mut out = Predictions {
        views: 1,
        ..Default::default()
    };
    for batch in loader.by_ref() {
        let batch = batch?;
        let probs = clf.predict_batch(&batch.inputs)?.to_dtype(candle_core::DType::F32)?.to_vec2::<f32>()?;
        if probs.len() != batch.len() {
            return Err(Error::Evaluation(format!("{} predictions for a batch of {}", probs.len(), batch.len())));
        }
        out.probs.extend(probs);
        out.labels.extend(batch.labels);
        out.indices.extend(batch.indices);
    }
    out.stats = loader.finish();
    Ok(out)
}

/// Class probabilities for every decodable image in `samples`, in list order.
pub fn predict_samples(clf: &dyn Classifier, samples: Arc<[LabeledPath]>, opts: &PredictOptions) -> Result<Predictions> {
    let mut base = run_view(clf, &samples, &AugmentationPolicy::disabled(), 0, 0, opts)?;
    let Some(tta) = opts.tta.as_ref().filter(|t| t.views > 1) else {
        return Ok(base);
    };
    tta.policy.validate()?;
    for view in 1..tta.views {
        let extra = run_view(clf, &samples, &tta.policy, tta.seed, view as u64, opts)?;
        if extra.indices != base.indices {
            return Err(Error::Evaluation("augmented view decoded a different set of images".into()));
        }
        for (acc, row) in base.probs.iter_mut().zip(&extra.probs) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
    }
    let k = tta.views as f32;
    for row in &mut base.probs {
        for v in row.iter_mut() {
            *v /= k;
        }
    }
    base.views = tta.views;
    Ok(base)
}

/// Feature vectors for `samples`, keyed by their position in the list.
pub fn embed_samples(clf: &dyn Classifier, samples: Arc<[LabeledPath]>, opts: &PredictOptions) -> Result<Vec<(usize, Vec<f32>)>> {
    let stream = augmented_stream(samples, &AugmentationPolicy::disabled(), 0, 0, clf.input_size(), false).strict(opts.strict);
    let mut out = Vec::new();
    for batch in BatchLoader::spawn(stream, opts.batch_size, clf.normalization(), opts.prefetch) {
        let batch = batch?;
        let feats = clf.embed_batch(&batch.inputs)?.to_dtype(candle_core::DType::F32)?.to_vec2::<f32>()?;
        out.extend(batch.indices.into_iter().zip(feats));
    }
    Ok(out)
}
