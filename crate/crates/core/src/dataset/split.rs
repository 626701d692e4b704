use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, Split};
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    /// 60:20:20.
    fn default() -> Self {
        Self {
            train_frac: 0.6,
            val_frac: 0.2,
            test_frac: 0.2,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn new(train_frac: f64, val_frac: f64, test_frac: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            train_frac,
            val_frac,
            test_frac,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn fractions(&self) -> [f64; 3] {
        [self.train_frac, self.val_frac, self.test_frac]
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.fractions();
        if f.iter().any(|x| !x.is_finite() || *x <= 0.0) {
            return Err(Error::config(format!(
                "split fractions must be strictly positive, got {f:?}"
            )));
        }
        let sum: f64 = f.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "split fractions must sum to 1, got {f:?} (sum {sum})"
            )));
        }
        Ok(())
    }
}

/// Largest-remainder (Hamilton) apportionment of `n` items over `fractions`.
///
/// Each count is within one of `fraction * n`. When `n >= 3` and a split would
/// come out empty, one item moves to it from the largest split so every split
/// is populated.
pub fn apportion(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let quotas = fractions.map(|f| f * n as f64);
    // The epsilon keeps exact quotas such as 0.6 * 1645 from flooring one short.
    let mut counts = quotas.map(|q| (q + 1e-9).floor().max(0.0) as usize);
    let remainders: Vec<f64> = quotas
        .iter()
        .zip(&counts)
        .map(|(q, c)| q - *c as f64)
        .collect();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| remainders[b].total_cmp(&remainders[a]).then(a.cmp(&b)));
    let mut assigned: usize = counts.iter().sum();
    let mut k = 0;
    while assigned < n {
        counts[order[k % 3]] += 1;
        assigned += 1;
        k += 1;
    }
    while assigned > n {
        let i = *order.iter().rev().find(|&&i| counts[i] > 0).expect("some split is non-empty");
        counts[i] -= 1;
        assigned -= 1;
    }
    if n >= 3 {
        while let Some(empty) = (0..3).find(|&i| counts[i] == 0) {
            let largest = (0..3).max_by_key(|&i| (counts[i], std::cmp::Reverse(i))).unwrap();
            counts[largest] -= 1;
            counts[empty] += 1;
        }
    }
    counts
}

/// Deterministic per-class split.
///
/// Samples are sorted by path, each class is shuffled by its own stream derived
/// from `spec.seed` and the class name, then cut into train/val/test by
/// [`apportion`].
pub fn stratified_split(manifest: &DatasetManifest, spec: &SplitSpec) -> Result<DatasetManifest> {
    spec.validate()?;
    if manifest.samples.iter().any(|s| s.split != Split::Unassigned) {
        return Err(Error::Dataset(
            "manifest is already split; clear the existing assignment first".into(),
        ));
    }
    let mut out = manifest.clone();
    out.samples.sort_by(|a, b| a.path.cmp(&b.path));
    for class in &manifest.class_names {
        let mut members: Vec<usize> = out
            .samples
            .iter()
            .enumerate()
            .filter(|(_, s)| &s.class_label == class)
            .map(|(i, _)| i)
            .collect();
        if members.len() < 3 {
            return Err(Error::Dataset(format!(
                "class {class:?} has {} samples; at least 3 are needed to populate train, val and test",
                members.len()
            )));
        }
        let mut rng = seed::rng(spec.seed, &format!("{}/{class}", seed::SPLIT), &[]);
        members.shuffle(&mut rng);
        let [n_train, n_val, _] = apportion(members.len(), spec.fractions());
        for (rank, &idx) in members.iter().enumerate() {
            out.samples[idx].split = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    out.split_spec = Some(spec.clone());
    Ok(out)
}
