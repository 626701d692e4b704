use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(class_names: &[String]) -> Self {
        let n = class_names.len();
        Self {
            class_names: class_names.to_vec(),
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    /// Reorders classes so that new class `k` is old class `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            class_names: order.iter().map(|&i| self.class_names[i].clone()).collect(),
            counts: order
                .iter()
                .map(|&i| order.iter().map(|&j| self.counts[i][j]).collect())
                .collect(),
        }
    }
}

pub fn compute_confusion(preds: &[usize], labels: &[usize], class_names: &[String]) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::Evaluation(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let n = class_names.len();
    let mut cm = ConfusionMatrix::zeros(class_names);
    for (&p, &l) in preds.iter().zip(labels) {
        if p >= n || l >= n {
            return Err(Error::Evaluation(format!(
                "class index out of range (label {l}, prediction {p}, {n} classes)"
            )));
        }
        cm.counts[l][p] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Unweighted mean over classes.
    #[default]
    Macro,
    /// Mean weighted by class support.
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Misclassification {
    pub path: PathBuf,
    pub true_class: String,
    pub predicted_class: String,
    pub predicted_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub total: u64,
    pub accuracy: f64,
    /// In class-index order.
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    /// Which pair of aggregates [`EvaluationReport::headline`] reports.
    pub averaging: Averaging,
    pub confusion: ConfusionMatrix,
    pub misclassified: Vec<Misclassification>,
    /// Images that could not be decoded and were left out.
    pub skipped: usize,
    /// Views averaged per image; 1 means no test-time augmentation.
    pub tta_views: usize,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Per-class and aggregate metrics. Zero denominators give 0.
pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<EvaluationReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Evaluation("no evaluated samples".into()));
    }
    let n = cm.n_classes();
    let per_class: Vec<ClassMetrics> = (0..n)
        .map(|c| {
            let precision = ratio(cm.counts[c][c], cm.col_sum(c));
            let recall = ratio(cm.counts[c][c], cm.row_sum(c));
            ClassMetrics {
                class_name: cm.class_names[c].clone(),
                precision,
                recall,
                f1: f1_score(precision, recall),
                support: cm.row_sum(c),
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n as f64;
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / total as f64
    };
    Ok(EvaluationReport {
        total,
        accuracy: ratio(cm.trace(), total),
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        weighted_precision: weighted(|m| m.precision),
        weighted_recall: weighted(|m| m.recall),
        weighted_f1: weighted(|m| m.f1),
        per_class,
        averaging: Averaging::Macro,
        confusion: cm.clone(),
        misclassified: Vec::new(),
        skipped: 0,
        tta_views: 1,
    })
}

impl EvaluationReport {
    /// `(precision, recall, f1)` under the report's averaging mode.
    pub fn headline(&self) -> (f64, f64, f64) {
        match self.averaging {
            Averaging::Macro => (self.macro_precision, self.macro_recall, self.macro_f1),
            Averaging::Weighted => (self.weighted_precision, self.weighted_recall, self.weighted_f1),
        }
    }

    pub fn summary(&self) -> String {
        let (p, r, f) = self.headline();
        let mode = match self.averaging {
            Averaging::Macro => "macro",
            Averaging::Weighted => "weighted",
        };
        format!(
            "accuracy {:.4} | {mode} precision {p:.4} recall {r:.4} f1 {f:.4} | {} images, {} misclassified",
            self.accuracy,
            self.total,
            self.confusion.total() - self.confusion.trace()
        )
    }
}
