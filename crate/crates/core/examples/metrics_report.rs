//! Metrics, CSV tables and the heatmap from a confusion matrix, without a model.
//!
//!     cargo run --example metrics_report -- out_dir

use std::path::PathBuf;

use leafnet::evaluation::{compute_metrics, write_report, Averaging, ConfusionMatrix};

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("metrics_report"));
    let cm = ConfusionMatrix {
        class_names: leafnet::dataset::APPLE_CLASSES.iter().map(|s| s.to_string()).collect(),
        counts: vec![
            vec![124, 1, 0, 1],
            vec![0, 124, 0, 0],
            vec![0, 1, 54, 0],
            vec![1, 0, 0, 328],
        ],
    };
    let mut report = compute_metrics(&cm)?;
    println!("{}", report.summary());
    for m in &report.per_class {
        println!(
            "{:<18} precision {:.4} recall {:.4} f1 {:.4} support {}",
            m.class_name, m.precision, m.recall, m.f1, m.support
        );
    }
    report.averaging = Averaging::Weighted;
    println!("{}", report.summary());
    report.averaging = Averaging::Macro;
    write_report(&report, &out)?;
    println!("wrote report.json, confusion.csv, classwise.csv, confusion.png to {}", out.display());
    Ok(())
}
