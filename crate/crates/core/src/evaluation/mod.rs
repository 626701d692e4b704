//! Test-set prediction, metrics, confusion heatmap and error gallery.

mod gallery;
mod metrics;
mod predict;
mod render;
mod report;

use std::sync::Arc;

pub use gallery::{cosine_similarity, error_analysis, GalleryEntry, INDEX_FILE};
pub use metrics::{
    compute_confusion, compute_metrics, f1_score, Averaging, ClassMetrics, ConfusionMatrix, EvaluationReport,
    Misclassification,
};
pub use predict::{argmax, embed_samples, predict_samples, Classifier, PredictOptions, Predictions, TtaConfig};
pub use render::render_confusion;
pub use report::{
    read_report, write_classwise_csv, write_confusion_csv, write_report, CLASSWISE_CSV, CONFUSION_CSV, CONFUSION_PNG,
    REPORT_JSON,
};

#[cfg(test)]
pub(crate) use predict::testing;

use crate::dataset::LabeledPath;
use crate::Result;

/// Builds a report from predictions already made over `samples`.
pub fn report_from_predictions(
    class_names: &[String],
    samples: &[LabeledPath],
    preds: &Predictions,
    averaging: Averaging,
) -> Result<EvaluationReport> {
    let labels: Vec<usize> = preds.labels.iter().map(|&l| l as usize).collect();
    let predicted = preds.predicted();
    let cm = compute_confusion(&predicted, &labels, class_names)?;
    let mut report = compute_metrics(&cm)?;
    report.averaging = averaging;
    report.skipped = preds.stats.skipped;
    report.tta_views = preds.views.max(1);
    report.misclassified = preds
        .indices
        .iter()
        .zip(&labels)
        .zip(&predicted)
        .zip(&preds.probs)
        .filter(|(((_, l), p), _)| l != p)
        .map(|(((&i, &l), &p), row)| Misclassification {
            path: samples[i].path.clone(),
            true_class: class_names[l].clone(),
            predicted_class: class_names[p].clone(),
            predicted_prob: row[p] as f64,
        })
        .collect();
    Ok(report)
}

/// Predicts every sample and summarises the outcome.
pub fn evaluate_samples(
    clf: &dyn Classifier,
    samples: &[LabeledPath],
    opts: &PredictOptions,
    averaging: Averaging,
) -> Result<(EvaluationReport, Predictions)> {
    let shared: Arc<[LabeledPath]> = samples.to_vec().into();
    let preds = predict_samples(clf, shared, opts)?;
    let report = report_from_predictions(clf.class_names(), samples, &preds, averaging)?;
    Ok((report, preds))
}
