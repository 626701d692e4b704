//! End-to-end fine-tuning on generated leaves at a small resolution: split,
//! train with augmentation, plateau decay and early stopping, then evaluate.
//!
//!     cargo run --release --example train_synthetic -- out_dir

mod common;

use std::path::PathBuf;

use leafnet::augmentation::AugmentationPolicy;
use leafnet::dataset::{scan_dataset, stratified_split, ScanOptions, Split, SplitSpec};
use leafnet::evaluation::{evaluate_samples, write_report, Averaging, PredictOptions};
use leafnet::model::{build_model, BuildOptions, ClassifierHeadConfig, FeatureExtractorConfig};
use leafnet::training::{train, TrainOptions, TrainingConfig};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("train_synthetic"));
    let data = tempfile::tempdir()?;
    common::fake_leaves(data.path(), 15, 48)?;
    let manifest = stratified_split(&scan_dataset(data.path(), ScanOptions::default())?.manifest, &SplitSpec::with_seed(1))?;

    // Frozen random backbone: only the head learns, which keeps this quick on a CPU.
    let extractor = FeatureExtractorConfig {
        trainable: false,
        ..FeatureExtractorConfig::untrained()
    };
    let bundle = build_model(
        &extractor,
        &ClassifierHeadConfig::default(),
        (64, 64),
        &BuildOptions::new(manifest.class_names.clone(), 1),
    )?;
    let config = TrainingConfig {
        batch_size: 8,
        learning_rate: 1e-3,
        max_epochs: 8,
        plateau_patience: 2,
        early_stop_patience: 4,
        seed: 1,
        ..Default::default()
    };
    let outcome = train(
        &bundle,
        &manifest,
        &AugmentationPolicy::default(),
        &config,
        &TrainOptions {
            checkpoint_dir: Some(out.join("checkpoint")),
            history_dir: Some(out.clone()),
            ..Default::default()
        },
    )?;
    println!(
        "kept epoch {} of {} (val loss {:.4}, val acc {:.3})",
        outcome.best_epoch,
        outcome.history.len(),
        outcome.best.best_val_loss,
        outcome.best.best_val_accuracy
    );

    let test = manifest.labeled(Split::Test);
    let (report, _) = evaluate_samples(&bundle, &test, &PredictOptions::default(), Averaging::Macro)?;
    write_report(&report, &out.join("evaluation"))?;
    println!("test: {}", report.summary());
    println!("artifacts in {}", out.display());
    Ok(())
}
