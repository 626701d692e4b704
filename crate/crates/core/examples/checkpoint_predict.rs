//! Save a model, load it back and classify images with it.
//!
//!     cargo run --release --example checkpoint_predict -- run_dir/checkpoint leaf1.jpg leaf2.jpg
//!
//! Without a checkpoint argument a fresh model is saved to a temporary
//! directory first, and the reloaded copy must agree with it exactly.

mod common;

use std::path::PathBuf;
use std::sync::Arc;

use candle_core::Device;
use leafnet::dataset::LabeledPath;
use leafnet::evaluation::{predict_samples, PredictOptions};
use leafnet::model::{
    build_model, load_checkpoint, save_checkpoint, BuildOptions, CheckpointMetrics, ClassifierHeadConfig,
    FeatureExtractorConfig,
};

fn main() -> anyhow::Result<()> {
    let args: Vec<PathBuf> = std::env::args().skip(1).map(PathBuf::from).collect();
    let tmp = tempfile::tempdir()?;
    let (checkpoint, mut images) = match args.split_first() {
        Some((c, rest)) => (c.clone(), rest.to_vec()),
        None => {
            let names = leafnet::dataset::APPLE_CLASSES.iter().map(|s| s.to_string()).collect();
            let fresh = build_model(
                &FeatureExtractorConfig::untrained(),
                &ClassifierHeadConfig::default(),
                (64, 64),
                &BuildOptions::new(names, 4),
            )?;
            let dir = tmp.path().join("checkpoint");
            save_checkpoint(&fresh, &CheckpointMetrics::default(), &dir)?;
            println!("saved {}", dir.display());
            (dir, Vec::new())
        }
    };
    if images.is_empty() {
        common::fake_leaves(&tmp.path().join("leaves"), 1, 64)?;
        images = common::DIRS.iter().map(|d| tmp.path().join("leaves").join(d).join("000.png")).collect();
    }

    let (bundle, meta) = load_checkpoint(&checkpoint, &Device::Cpu)?;
    println!(
        "loaded {}x{} model, classes {:?}, config {}",
        meta.input_resolution.0,
        meta.input_resolution.1,
        meta.class_names,
        &meta.config_hash[..12]
    );
    let samples: Arc<[LabeledPath]> = images.iter().map(|p| LabeledPath { path: p.clone(), label: 0 }).collect();
    let preds = predict_samples(&bundle, samples, &PredictOptions::default())?;
    for (i, row) in preds.indices.iter().zip(&preds.probs) {
        let best = leafnet::evaluation::argmax(row);
        let probs: Vec<String> = row.iter().map(|p| format!("{p:.4}")).collect();
        println!("{}\t{}\t{}", images[*i].display(), bundle.class_names[best], probs.join(" "));
    }
    for (path, why) in &preds.stats.failures {
        eprintln!("{}\terror\t{why}", path.display());
    }
    Ok(())
}
