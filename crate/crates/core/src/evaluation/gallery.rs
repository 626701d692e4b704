//! Misclassification gallery: each wrongly predicted test image is copied
//! next to the training image of the predicted class it most resembles.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use super::predict::{embed_samples, PredictOptions, Predictions};
use super::Classifier;
use crate::dataset::LabeledPath;
use crate::{Error, Result};

pub const INDEX_FILE: &str = "index.csv";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GalleryEntry {
    pub test_path: PathBuf,
    pub true_class: String,
    pub predicted_class: String,
    pub predicted_prob: f64,
    /// Copy of the test image inside the gallery.
    pub gallery_path: PathBuf,
    pub paired_train_path: Option<PathBuf>,
    pub paired_copy: Option<PathBuf>,
    /// Cosine similarity of the pair's feature vectors, in `[-1, 1]`.
    pub similarity: Option<f64>,
}

/// Cosine similarity clamped to `[-1, 1]`; 0 when either vector is zero.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

fn unique_target(dir: &Path, name: &str) -> PathBuf {
    let candidate = dir.join(name);
    if !candidate.exists() {
        return candidate;
    }
    (1..)
        .map(|i| dir.join(format!("{i}_{name}")))
        .find(|p| !p.exists())
        .expect("unbounded search")
}

fn copy(src: &Path, dst: &Path) -> Result<()> {
    fs::copy(src, dst).map_err(|e| Error::io(src, e))?;
    Ok(())
}

/// Writes `<out_dir>/<true>__as__<pred>/` folders and `<out_dir>/index.csv`.
///
/// `test` and `preds` must come from the same [`predict_samples`] call;
/// `train` supplies the candidates for similarity pairing.
///
/// [`predict_samples`]: super::predict::predict_samples
pub fn error_analysis(
    clf: &dyn Classifier,
    test: &[LabeledPath],
    preds: &Predictions,
    train: &[LabeledPath],
    out_dir: &Path,
    opts: &PredictOptions,
) -> Result<Vec<GalleryEntry>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let names = clf.class_names();
    let predicted = preds.predicted();
    let wrong: Vec<(usize, usize, usize, f64)> = preds
        .indices
        .iter()
        .zip(&preds.labels)
        .zip(&predicted)
        .zip(&preds.probs)
        .filter(|(((_, &l), &p), _)| l as usize != p)
        .map(|(((&i, &l), &p), row)| (i, l as usize, p, row[p] as f64))
        .collect();

    let mut entries = Vec::with_capacity(wrong.len());
    if !wrong.is_empty() {
        let wrong_paths: Arc<[LabeledPath]> = wrong.iter().map(|w| test[w.0].clone()).collect();
        let wrong_feats: BTreeMap<usize, Vec<f32>> = embed_samples(clf, wrong_paths, opts)?.into_iter().collect();

        // Embed only the training classes that some error was predicted as.
        let mut by_class: BTreeMap<usize, Vec<(PathBuf, Vec<f32>)>> = BTreeMap::new();
        for class in wrong.iter().map(|w| w.2).collect::<std::collections::BTreeSet<_>>() {
            let members: Vec<LabeledPath> = train.iter().filter(|t| t.label == class).cloned().collect();
            let feats = embed_samples(clf, members.clone().into(), opts)?;
            by_class.insert(class, feats.into_iter().map(|(i, f)| (members[i].path.clone(), f)).collect());
        }

        for (k, &(idx, label, pred, prob)) in wrong.iter().enumerate() {
            let src = &test[idx].path;
            let dir = out_dir.join(format!("{}__as__{}", names[label], names[pred]));
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let name = file_name(src);
            let gallery_path = unique_target(&dir, &name);
            copy(src, &gallery_path)?;

            let best = wrong_feats.get(&k).and_then(|f| {
                by_class
                    .get(&pred)?
                    .iter()
                    .map(|(p, g)| (p, cosine_similarity(f, g)))
                    .max_by(|a, b| a.1.total_cmp(&b.1))
            });
            let (paired_train_path, paired_copy, similarity) = match best {
                Some((p, s)) => {
                    let stem = Path::new(&name).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                    let dst = unique_target(&dir, &format!("{stem}__similar__{}", file_name(p)));
                    copy(p, &dst)?;
                    (Some(p.clone()), Some(dst), Some(s))
                }
                None => (None, None, None),
            };
            entries.push(GalleryEntry {
                test_path: src.clone(),
                true_class: names[label].clone(),
                predicted_class: names[pred].clone(),
                predicted_prob: prob,
                gallery_path,
                paired_train_path,
                paired_copy,
                similarity,
            });
        }
    }
    write_index(&entries, &out_dir.join(INDEX_FILE))?;
    Ok(entries)
}

fn write_index(entries: &[GalleryEntry], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "test_path",
        "true_class",
        "predicted_class",
        "predicted_prob",
        "gallery_path",
        "paired_train_path",
        "similarity",
    ])?;
    let show = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
    for e in entries {
        w.write_record([
            e.test_path.display().to_string(),
            e.true_class.clone(),
            e.predicted_class.clone(),
            format!("{:.6}", e.predicted_prob),
            e.gallery_path.display().to_string(),
            show(&e.paired_train_path),
            e.similarity.map(|s| format!("{s:.6}")).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
