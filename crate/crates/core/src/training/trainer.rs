use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use serde::Serialize;

use super::config::TrainingConfig;
use super::history::{EpochRecord, TrainingHistory};
use super::loss::{cross_entropy, cross_entropy_rows, scalar};
use super::schedule::{best_epoch, monitored, plateau_step, should_stop};
use crate::augmentation::{augmented_stream, AugmentationPolicy, BatchLoader};
use crate::dataset::{DatasetManifest, LabeledPath, Split};
use crate::evaluation::{argmax, predict_samples, PredictOptions};
use crate::model::{save_checkpoint, CheckpointMetrics, ModelBundle, Mode};
use crate::seed;
use crate::{Error, Result};

/// Keras' default; candle's 1e-8 makes early steps larger on tiny gradients.
pub const ADAM_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Best checkpoint is rewritten here (between epochs) whenever the monitor improves.
    pub checkpoint_dir: Option<PathBuf>,
    /// `history.csv`, `history.json` and the two curve plots, refreshed every epoch.
    pub history_dir: Option<PathBuf>,
    /// Where a NaN-loss dump goes; defaults to `diagnostics/` in the working directory.
    pub diagnostics_dir: Option<PathBuf>,
    pub strict: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: TrainingHistory,
    /// 1-based epoch whose weights the bundle now holds.
    pub best_epoch: usize,
    pub best: CheckpointMetrics,
    pub stopped_early: bool,
}

/// Everything needed to replay the batch that produced a non-finite loss.
#[derive(Debug, Clone, Serialize)]
pub struct NanDiagnostics {
    pub config: TrainingConfig,
    pub epoch: usize,
    pub batch_index: usize,
    pub loss: f64,
    pub learning_rate: f64,
    pub shuffle_seed: u64,
    pub dropout_seed: u64,
    pub augment_base_seed: u64,
    pub sample_paths: Vec<PathBuf>,
}

/// Passes finite losses through; otherwise writes `nan_epoch<E>_batch<B>.json`
/// under `dir` and fails with the batch index.
pub fn check_finite_loss(loss: f64, diag: impl FnOnce() -> NanDiagnostics, dir: &Path) -> Result<f64> {
    if loss.is_finite() {
        return Ok(loss);
    }
    let d = diag();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("nan_epoch{}_batch{}.json", d.epoch, d.batch_index));
    let json = serde_json::to_string_pretty(&d)?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Err(Error::Training(format!(
        "non-finite loss {loss} at epoch {} batch {}; diagnostics in {}",
        d.epoch,
        d.batch_index,
        path.display()
    )))
}

fn adam(bundle: &ModelBundle, lr: f64) -> Result<AdamW> {
    let params = ParamsAdamW {
        lr,
        eps: ADAM_EPS,
        weight_decay: 0.0,
        ..Default::default()
    };
    Ok(AdamW::new(bundle.trainable_vars(), params)?)
}

struct EpochTrain {
    loss: f64,
    acc: f64,
    skipped: usize,
}

fn train_epoch(
    bundle: &ModelBundle,
    opt: &mut AdamW,
    train: &Arc<[LabeledPath]>,
    policy: &AugmentationPolicy,
    config: &TrainingConfig,
    epoch: usize,
    opts: &TrainOptions,
) -> Result<EpochTrain> {
    let stream = augmented_stream(
        train.clone(),
        policy,
        config.seed,
        epoch as u64,
        bundle.input_resolution(),
        true,
    )
    .strict(opts.strict);
    let mut loader = BatchLoader::spawn(stream, config.batch_size, bundle.preprocess.normalization, config.prefetch);
    let diag_dir = opts.diagnostics_dir.clone().unwrap_or_else(|| PathBuf::from("diagnostics"));
    let (mut loss_sum, mut correct, mut seen) = (0.0f64, 0usize, 0usize);
    for (b, batch) in loader.by_ref().enumerate() {
        let batch = batch?;
        let dropout_seed = seed::derive(config.seed, seed::DROPOUT, &[epoch as u64, b as u64]);
        let logits = bundle.logits(&batch.inputs, Mode::Train { dropout_seed })?;
        let loss = cross_entropy(&logits, &batch.labels)?;
        let value = check_finite_loss(
            scalar(&loss)?,
            || NanDiagnostics {
                config: config.clone(),
                epoch,
                batch_index: b,
                loss: f64::NAN,
                learning_rate: opt.learning_rate(),
                shuffle_seed: seed::derive(config.seed, seed::SHUFFLE, &[epoch as u64]),
                dropout_seed,
                augment_base_seed: config.seed,
                sample_paths: batch.indices.iter().map(|&i| train[i].path.clone()).collect(),
            },
            &diag_dir,
        )?;
        opt.backward_step(&loss)?;
        let rows = logits.to_dtype(candle_core::DType::F32)?.to_vec2::<f32>()?;
        correct += rows
            .iter()
            .zip(&batch.labels)
            .filter(|(r, &l)| argmax(r) == l as usize)
            .count();
        loss_sum += value * batch.len() as f64;
        seen += batch.len();
        log::debug!("epoch {epoch} batch {b}: loss {value:.5}");
    }
    let stats = loader.finish();
    if seen == 0 {
        return Err(Error::Training(format!(
            "epoch {epoch}: none of the {} training images could be loaded",
            train.len()
        )));
    }
    Ok(EpochTrain {
        loss: loss_sum / seen as f64,
        acc: correct as f64 / seen as f64,
        skipped: stats.skipped,
    })
}

/// Fine-tunes `bundle` on the manifest's train split, validating on the
/// un-augmented val split after each epoch. On return the bundle holds the
/// weights of the best epoch under `config.monitor`.
pub fn train(
    bundle: &ModelBundle,
    manifest: &DatasetManifest,
    policy: &AugmentationPolicy,
    config: &TrainingConfig,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    config.validate()?;
    policy.validate()?;
    if manifest.class_names != bundle.class_names {
        return Err(Error::Training(format!(
            "manifest classes {:?} differ from model classes {:?}",
            manifest.class_names, bundle.class_names
        )));
    }
    let train: Arc<[LabeledPath]> = manifest.labeled(Split::Train).into();
    let val: Arc<[LabeledPath]> = manifest.labeled(Split::Val).into();
    if train.is_empty() {
        return Err(Error::Training("train split is empty".into()));
    }
    if val.is_empty() {
        return Err(Error::Training("validation split is empty".into()));
    }

    let mut opt = adam(bundle, config.learning_rate)?;
    let mut history = TrainingHistory::default();
    let mut best_snapshot = None;
    let mut best = CheckpointMetrics::default();
    let mut stopped_early = false;
    let val_opts = PredictOptions {
        batch_size: config.batch_size,
        tta: None,
        strict: opts.strict,
        prefetch: config.prefetch,
    };
    log::info!(
        "training on {} images, validating on {}, lr {}, {} trainable tensors",
        train.len(),
        val.len(),
        config.learning_rate,
        bundle.trainable_vars().len()
    );

    for epoch in 1..=config.max_epochs {
        let start = Instant::now();
        let lr = opt.learning_rate();
        let t = train_epoch(bundle, &mut opt, &train, policy, config, epoch, opts)?;
        let preds = predict_samples(bundle, val.clone(), &val_opts)?;
        if preds.is_empty() {
            return Err(Error::Training("no validation image could be loaded".into()));
        }
        let record = EpochRecord {
            epoch,
            train_loss: t.loss,
            train_acc: t.acc,
            val_loss: cross_entropy_rows(&preds.probs, &preds.labels)?,
            val_acc: preds.accuracy(),
            lr,
            wall_time_s: start.elapsed().as_secs_f64(),
            skipped: t.skipped,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} acc {:.4} | val_loss {:.4} val_acc {:.4} | lr {lr:e} | {:.1}s",
            record.train_loss,
            record.train_acc,
            record.val_loss,
            record.val_acc,
            record.wall_time_s
        );
        history.push(record)?;

        if best_epoch(&history.records, config.monitor) == Some(history.len() - 1) {
            let r = history.records.last().expect("just pushed");
            best = CheckpointMetrics {
                epoch,
                best_val_accuracy: r.val_acc,
                best_val_loss: r.val_loss,
            };
            best_snapshot = Some(bundle.snapshot()?);
            if let Some(dir) = &opts.checkpoint_dir {
                save_checkpoint(bundle, &best, dir)?;
            }
        }
        if let Some(dir) = &opts.history_dir {
            history.write_all(dir)?;
        }
        if should_stop(&history.records, config) {
            log::info!(
                "no {} improvement for {} epochs, stopping after epoch {epoch}",
                config.monitor,
                config.early_stop_patience
            );
            stopped_early = true;
            break;
        }
        let next = plateau_step(&history.records, config, lr);
        if next != lr {
            log::info!("{} plateaued, learning rate {lr:e} -> {next:e}", config.monitor);
            opt.set_learning_rate(next);
        }
    }

    let snapshot = best_snapshot
        .ok_or_else(|| Error::Training(format!("{} was never finite; no epoch to restore", config.monitor)))?;
    bundle.restore(&snapshot)?;
    let kept = &history.records[best.epoch - 1];
    log::info!(
        "restored epoch {} ({} {:.4})",
        best.epoch,
        config.monitor,
        monitored(kept, config.monitor)
    );
    Ok(TrainOutcome {
        best_epoch: best.epoch,
        history,
        best,
        stopped_early,
    })
}
