//! Per-epoch augmented sample streams and a prefetching batch loader.
//!
//! Each sample's transform comes from its own RNG derived from
//! `(base_seed, epoch, sample index)`, so the set of augmented pixels is the
//! same however the work is scheduled across threads.

use std::path::{Path, PathBuf};
use std::sync::mpsc::{sync_channel, Receiver};
use std::sync::Arc;
use std::thread::JoinHandle;

use candle_core::{Device, Tensor};
use image::RgbImage;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{apply_transform, sample_transform, AugmentationPolicy, TransformParams};
use crate::dataset::LabeledPath;
use crate::model::preprocess::{coerce_rgb, resize_rgb, to_tensor, Normalization};
use crate::seed;
use crate::{Error, Result};

/// Decodes, coerces to RGB and resizes to `(height, width)`.
pub fn load_sample(path: &Path, size: (u32, u32), strict: bool) -> Result<RgbImage> {
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            source: e,
        })?;
    Ok(resize_rgb(&coerce_rgb(img, strict)?, size))
}

#[derive(Debug, Clone)]
pub struct AugmentedSample {
    pub image: RgbImage,
    pub label: usize,
    /// Position of the source in the stream's sample list.
    pub index: usize,
    pub params: TransformParams,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EpochStats {
    pub yielded: usize,
    pub skipped: usize,
    pub failures: Vec<(PathBuf, String)>,
}

/// One epoch's worth of samples, shuffled and augmented.
#[derive(Debug, Clone)]
pub struct AugmentedStream {
    samples: Arc<[LabeledPath]>,
    policy: AugmentationPolicy,
    size: (u32, u32),
    base_seed: u64,
    epoch: u64,
    strict: bool,
    order: Vec<usize>,
    pos: usize,
    stats: EpochStats,
}

/// Stream over `samples` for `epoch`. With `shuffle` the visiting order is a
/// seeded permutation; without it samples come in list order.
pub fn augmented_stream(
    samples: Arc<[LabeledPath]>,
    policy: &AugmentationPolicy,
    base_seed: u64,
    epoch: u64,
    size: (u32, u32),
    shuffle: bool,
) -> AugmentedStream {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    if shuffle {
        order.shuffle(&mut seed::rng(base_seed, seed::SHUFFLE, &[epoch]));
    }
    AugmentedStream {
        samples,
        policy: policy.clone(),
        size,
        base_seed,
        epoch,
        strict: false,
        order,
        pos: 0,
        stats: EpochStats::default(),
    }
}

impl AugmentedStream {
    /// Reject grayscale/alpha images instead of coercing them.
    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn stats(&self) -> &EpochStats {
        &self.stats
    }

    pub fn into_stats(self) -> EpochStats {
        self.stats
    }

    /// Transform for sample `index` in this epoch.
    pub fn params_for(&self, index: usize) -> TransformParams {
        let mut rng = seed::rng(self.base_seed, seed::AUGMENT, &[self.epoch, index as u64]);
        sample_transform(&self.policy, (self.size.1, self.size.0), &mut rng)
    }

    fn produce(&self, index: usize) -> Result<AugmentedSample> {
        let src = &self.samples[index];
        let image = load_sample(&src.path, self.size, self.strict)?;
        let params = self.params_for(index);
        let image = apply_transform(&image, &params, self.policy.fill_mode, self.policy.fill_value);
        Ok(AugmentedSample {
            image,
            label: src.label,
            index,
            params,
        })
    }

    fn record(&mut self, index: usize, result: Result<AugmentedSample>) -> Option<AugmentedSample> {
        match result {
            Ok(s) => {
                self.stats.yielded += 1;
                Some(s)
            }
            Err(e) => {
                let path = self.samples[index].path.clone();
                log::warn!("skipping {}: {e}", path.display());
                self.stats.skipped += 1;
                self.stats.failures.push((path, e.to_string()));
                None
            }
        }
    }

    /// Up to `n` further samples, decoded and augmented in parallel. Failed
    /// samples are skipped, so the result can be shorter; `None` once the
    /// epoch is exhausted.
    pub fn next_chunk(&mut self, n: usize) -> Option<Vec<AugmentedSample>> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + n.max(1)).min(self.order.len());
        let indices: Vec<usize> = self.order[self.pos..end].to_vec();
        self.pos = end;
        let results: Vec<Result<AugmentedSample>> = indices.par_iter().map(|&i| self.produce(i)).collect();
        Some(
            indices
                .into_iter()
                .zip(results)
                .filter_map(|(i, r)| self.record(i, r))
                .collect(),
        )
    }
}

impl Iterator for AugmentedStream {
    type Item = AugmentedSample;

    fn next(&mut self) -> Option<AugmentedSample> {
        while self.pos < self.order.len() {
            let index = self.order[self.pos];
            self.pos += 1;
            let result = self.produce(index);
            if let Some(s) = self.record(index, result) {
                return Some(s);
            }
        }
        None
    }
}

/// A model-ready batch.
#[derive(Debug, Clone)]
pub struct LoadedBatch {
    /// `(B, 3, H, W)` f32.
    pub inputs: Tensor,
    pub labels: Vec<u32>,
    pub indices: Vec<usize>,
}

impl LoadedBatch {
    pub fn from_samples(samples: &[AugmentedSample], normalization: Normalization, device: &Device) -> Result<Self> {
        let tensors: Vec<Tensor> = samples
            .iter()
            .map(|s| to_tensor(&s.image, normalization, device))
            .collect::<Result<_>>()?;
        Ok(Self {
            inputs: crate::model::preprocess::stack_batch(&tensors, candle_core::DType::F32)?,
            labels: samples.iter().map(|s| s.label as u32).collect(),
            indices: samples.iter().map(|s| s.index).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Prepares batches on a background thread, at most `capacity` ahead of the
/// consumer.
pub struct BatchLoader {
    rx: Option<Receiver<Result<LoadedBatch>>>,
    handle: Option<JoinHandle<EpochStats>>,
}

impl BatchLoader {
    pub fn spawn(
        mut stream: AugmentedStream,
        batch_size: usize,
        normalization: Normalization,
        capacity: usize,
    ) -> Self {
        let (tx, rx) = sync_channel(capacity.max(1));
        let handle = std::thread::spawn(move || {
            let device = Device::Cpu;
            while let Some(chunk) = stream.next_chunk(batch_size) {
                if chunk.is_empty() {
                    continue;
                }
                let batch = LoadedBatch::from_samples(&chunk, normalization, &device);
                if tx.send(batch).is_err() {
                    break;
                }
            }
            stream.into_stats()
        });
        Self {
            rx: Some(rx),
            handle: Some(handle),
        }
    }

    /// Waits for the producer and returns its counters.
    pub fn finish(mut self) -> EpochStats {
        self.rx.take();
        self.handle
            .take()
            .and_then(|h| h.join().ok())
            .unwrap_or_default()
    }
}

impl Iterator for BatchLoader {
    type Item = Result<LoadedBatch>;

    fn next(&mut self) -> Option<Self::Item> {
        self.rx.as_ref()?.recv().ok()
    }
}

impl Drop for BatchLoader {
    fn drop(&mut self) {
        self.rx.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
