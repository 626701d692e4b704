//! Class-per-directory image corpus: scanning, stratified splitting and the
//! text manifest that records both.

mod manifest_io;
mod scan;
mod split;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use manifest_io::{load_manifest, manifest_hash, render_manifest, save_manifest};
pub use scan::{scan_dataset, ScanOptions, ScanOutcome, ScanWarning};
pub use split::{apportion, stratified_split, SplitSpec};

use crate::{Error, Result};

/// The four apple leaf classes, in label-index order.
pub const APPLE_CLASSES: [&str; 4] = ["apple_scab", "black_rot", "cedar_apple_rust", "healthy"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

impl Split {
    pub const ASSIGNED: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            "unassigned" => Some(Split::Unassigned),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageSample {
    /// Relative to the dataset root, `/`-separated.
    pub path: PathBuf,
    pub class_label: String,
    pub split: Split,
}

/// Resolved image path with its label index, ready for loading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPath {
    pub path: PathBuf,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: Option<PathBuf>,
    /// Sorted; a sample's label index is its class's position here.
    pub class_names: Vec<String>,
    pub samples: Vec<ImageSample>,
    /// Set once the manifest has been split.
    pub split_spec: Option<SplitSpec>,
}

impl DatasetManifest {
    pub fn new(root: Option<PathBuf>, mut class_names: Vec<String>, samples: Vec<ImageSample>) -> Result<Self> {
        class_names.sort();
        let m = Self {
            root,
            class_names,
            samples,
            split_spec: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut sorted = self.class_names.clone();
        sorted.sort();
        sorted.dedup();
        if sorted != self.class_names {
            return Err(Error::Dataset(format!(
                "class names must be sorted and unique: {:?}",
                self.class_names
            )));
        }
        let mut seen = HashSet::with_capacity(self.samples.len());
        for s in &self.samples {
            if self.class_index(&s.class_label).is_none() {
                return Err(Error::Dataset(format!(
                    "{}: unknown class {:?}",
                    s.path.display(),
                    s.class_label
                )));
            }
            if !seen.insert(&s.path) {
                return Err(Error::Dataset(format!("duplicate sample {}", s.path.display())));
            }
        }
        Ok(())
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.binary_search_by(|c| c.as_str().cmp(name)).ok()
    }

    /// Label index of a sample. Panics if the manifest was not validated.
    pub fn label_of(&self, sample: &ImageSample) -> usize {
        self.class_index(&sample.class_label)
            .expect("sample label is a known class")
    }

    pub fn per_class_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.samples {
            *counts.entry(s.class_label.clone()).or_insert(0) += 1;
        }
        counts
    }

    pub fn split_counts(&self) -> BTreeMap<(String, Split), usize> {
        let mut counts = BTreeMap::new();
        for s in &self.samples {
            *counts.entry((s.class_label.clone(), s.split)).or_insert(0) += 1;
        }
        counts
    }

    pub fn samples_in(&self, split: Split) -> Vec<&ImageSample> {
        self.samples.iter().filter(|s| s.split == split).collect()
    }

    pub fn is_split(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.split != Split::Unassigned)
    }

    /// Resets every sample to `Unassigned`.
    pub fn clear_splits(&mut self) {
        for s in &mut self.samples {
            s.split = Split::Unassigned;
        }
        self.split_spec = None;
    }

    /// Largest class count over smallest non-empty class count.
    pub fn imbalance_ratio(&self) -> Option<f64> {
        let counts = self.per_class_counts();
        let max = counts.values().copied().max()?;
        let min = counts.values().copied().filter(|&c| c > 0).min()?;
        Some(max as f64 / min as f64)
    }

    pub fn resolve(&self, sample: &ImageSample) -> PathBuf {
        match &self.root {
            Some(root) => root.join(&sample.path),
            None => sample.path.clone(),
        }
    }

    /// Resolved paths and label indices of one split, in manifest order.
    pub fn labeled(&self, split: Split) -> Vec<LabeledPath> {
        self.samples
            .iter()
            .filter(|s| s.split == split)
            .map(|s| LabeledPath {
                path: self.resolve(s),
                label: self.label_of(s),
            })
            .collect()
    }

    pub fn with_root(mut self, root: impl AsRef<Path>) -> Self {
        self.root = Some(root.as_ref().to_path_buf());
        self
    }
}

/// Directory name → label: text after a `Crop___` prefix (PlantVillage
/// convention), lowercased, runs of non-alphanumerics collapsed to `_`.
pub fn normalize_class_name(dir_name: &str) -> String {
    let tail = dir_name.rsplit("___").next().unwrap_or(dir_name);
    let mut out = String::with_capacity(tail.len());
    for ch in tail.chars() {
        if ch.is_alphanumeric() {
            out.extend(ch.to_lowercase());
        } else if !out.is_empty() && !out.ends_with('_') {
            out.push('_');
        }
    }
    while out.ends_with('_') {
        out.pop();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plantvillage_directory_names() {
        assert_eq!(normalize_class_name("Apple___Apple_scab"), "apple_scab");
        assert_eq!(normalize_class_name("Apple___Black_rot"), "black_rot");
        assert_eq!(normalize_class_name("Apple___Cedar_apple_rust"), "cedar_apple_rust");
        assert_eq!(normalize_class_name("Apple___healthy"), "healthy");
        assert_eq!(normalize_class_name("Cedar Apple-Rust"), "cedar_apple_rust");
        assert_eq!(normalize_class_name("healthy"), "healthy");
    }

    #[test]
    fn duplicate_paths_rejected() {
        let s = ImageSample {
            path: "a/1.jpg".into(),
            class_label: "healthy".into(),
            split: Split::Unassigned,
        };
        let err = DatasetManifest::new(None, vec!["healthy".into()], vec![s.clone(), s]);
        assert!(err.is_err());
    }

    #[test]
    fn imbalance_ratio_of_apple_counts() {
        let mut samples = Vec::new();
        for (class, n) in [("healthy", 1645usize), ("cedar_apple_rust", 275)] {
            for i in 0..n {
                samples.push(ImageSample {
                    path: format!("{class}/{i}.jpg").into(),
                    class_label: class.into(),
                    split: Split::Unassigned,
                });
            }
        }
        let m = DatasetManifest::new(None, vec!["healthy".into(), "cedar_apple_rust".into()], samples).unwrap();
        assert_eq!(m.class_names, vec!["cedar_apple_rust", "healthy"]);
        let r = m.imbalance_ratio().unwrap();
        assert!((r - 1645.0 / 275.0).abs() < 1e-12);
        assert!((r - 5.98).abs() < 0.005);
    }
}
