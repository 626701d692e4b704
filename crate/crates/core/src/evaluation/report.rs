use std::fs;
use std::path::Path;

use super::metrics::{ConfusionMatrix, EvaluationReport};
use super::render::render_confusion;
use crate::{Error, Result};

pub const REPORT_JSON: &str = "report.json";
pub const CONFUSION_CSV: &str = "confusion.csv";
pub const CLASSWISE_CSV: &str = "classwise.csv";
pub const CONFUSION_PNG: &str = "confusion.png";

pub fn write_confusion_csv(cm: &ConfusionMatrix, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(cm.class_names.iter().cloned());
    w.write_record(&header)?;
    for (name, row) in cm.class_names.iter().zip(&cm.counts) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|c| c.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-class precision/recall/F1/support as 4-decimal fractions plus whole percents.
pub fn write_classwise_csv(report: &EvaluationReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["class", "precision", "recall", "f1", "support", "precision_pct", "recall_pct", "f1_pct"])?;
    let pct = |v: f64| format!("{}", (v * 100.0).round() as i64);
    for m in &report.per_class {
        w.write_record([
            m.class_name.clone(),
            format!("{:.4}", m.precision),
            format!("{:.4}", m.recall),
            format!("{:.4}", m.f1),
            m.support.to_string(),
            pct(m.precision),
            pct(m.recall),
            pct(m.f1),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `report.json`, `confusion.csv`, `classwise.csv` and `confusion.png` under `dir`.
pub fn write_report(report: &EvaluationReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = serde_json::to_string_pretty(report)?;
    let path = dir.join(REPORT_JSON);
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    write_confusion_csv(&report.confusion, &dir.join(CONFUSION_CSV))?;
    write_classwise_csv(report, &dir.join(CLASSWISE_CSV))?;
    render_confusion(&report.confusion, &dir.join(CONFUSION_PNG))
}

pub fn read_report(path: &Path) -> Result<EvaluationReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::metrics::compute_metrics;

    #[test]
    fn report_files_round_trip() {
        let cm = ConfusionMatrix {
            class_names: vec!["a".into(), "b".into()],
            counts: vec![vec![8, 2], vec![1, 9]],
        };
        let report = compute_metrics(&cm).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_report(&report, dir.path()).unwrap();
        assert_eq!(read_report(&dir.path().join(REPORT_JSON)).unwrap(), report);
        let conf = fs::read_to_string(dir.path().join(CONFUSION_CSV)).unwrap();
        assert_eq!(conf, "true\\predicted,a,b\na,8,2\nb,1,9\n");
        let cw = fs::read_to_string(dir.path().join(CLASSWISE_CSV)).unwrap();
        let row: Vec<&str> = cw.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row, ["a", "0.8889", "0.8000", "0.8421", "10", "89", "80", "84"]);
        assert!(dir.path().join(CONFUSION_PNG).exists());
    }
}
