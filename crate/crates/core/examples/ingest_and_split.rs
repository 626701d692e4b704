//! Scan an image folder, split it 60:20:20 per class and save the manifest.
//!
//!     cargo run --example ingest_and_split -- /data/plantvillage/apple manifest.tsv
//!
//! Without arguments a small fake dataset is generated first.

mod common;

use std::path::PathBuf;

use leafnet::dataset::{manifest_hash, save_manifest, scan_dataset, stratified_split, ScanOptions, SplitSpec};
use leafnet::experiment::class_summary;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let tmp = tempfile::tempdir()?;
    let root = match args.next() {
        Some(p) => PathBuf::from(p),
        None => {
            common::fake_leaves(tmp.path(), 20, 32)?;
            tmp.path().to_path_buf()
        }
    };
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| tmp.path().join("manifest.tsv"));

    let scan = scan_dataset(&root, ScanOptions::default())?;
    for w in &scan.warnings {
        eprintln!("skipped {}: {}", w.path.display(), w.message);
    }
    let split = stratified_split(&scan.manifest, &SplitSpec::with_seed(42))?;
    print!("{}", class_summary(&split));
    save_manifest(&split, &out)?;
    println!("sha256 {}\nwrote {}", manifest_hash(&split)?, out.display());
    Ok(())
}
