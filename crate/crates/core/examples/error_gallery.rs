//! Misclassification gallery: every wrong test prediction is copied next to
//! the most similar training image of the class it was mistaken for.
//!
//!     cargo run --release --example error_gallery -- run_dir/checkpoint run_dir/manifest.tsv out_dir
//!
//! Without arguments a random untrained model is scored on generated leaves,
//! which guarantees plenty of errors to look at.

mod common;

use std::path::PathBuf;

use candle_core::Device;
use leafnet::dataset::{load_manifest, scan_dataset, stratified_split, ScanOptions, Split, SplitSpec};
use leafnet::evaluation::{error_analysis, evaluate_samples, Averaging, PredictOptions};
use leafnet::model::{build_model, load_checkpoint, BuildOptions, ClassifierHeadConfig, FeatureExtractorConfig};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let tmp = tempfile::tempdir()?;
    let (bundle, manifest, out) = if let [ckpt, manifest, out] = args.as_slice() {
        let (bundle, _) = load_checkpoint(&PathBuf::from(ckpt), &Device::Cpu)?;
        (bundle, load_manifest(&PathBuf::from(manifest))?, PathBuf::from(out))
    } else {
        common::fake_leaves(tmp.path(), 10, 48)?;
        let m = stratified_split(&scan_dataset(tmp.path(), ScanOptions::default())?.manifest, &SplitSpec::default())?;
        let bundle = build_model(
            &FeatureExtractorConfig::untrained(),
            &ClassifierHeadConfig::default(),
            (64, 64),
            &BuildOptions::new(m.class_names.clone(), 3),
        )?;
        (bundle, m, PathBuf::from("error_gallery"))
    };

    let test = manifest.labeled(Split::Test);
    let train = manifest.labeled(Split::Train);
    let opts = PredictOptions::default();
    let (report, preds) = evaluate_samples(&bundle, &test, &opts, Averaging::Macro)?;
    println!("{}", report.summary());
    let entries = error_analysis(&bundle, &test, &preds, &train, &out, &opts)?;
    for e in &entries {
        println!(
            "{} ({} as {}, p={:.3}) ~ {} (cos {:.3})",
            e.test_path.display(),
            e.true_class,
            e.predicted_class,
            e.predicted_prob,
            e.paired_train_path.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            e.similarity.unwrap_or(f64::NAN)
        );
    }
    println!("{} entries, index at {}", entries.len(), out.join("index.csv").display());
    Ok(())
}
