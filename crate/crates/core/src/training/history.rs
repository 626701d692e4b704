use std::fs;
use std::path::Path;

use plotters::prelude::*;
use serde::{Deserialize, Serialize};

use crate::plot::{ensure_font, FONT_FAMILY};
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    /// Rate used during this epoch.
    pub lr: f64,
    pub wall_time_s: f64,
    /// Training samples dropped because they failed to decode.
    pub skipped: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub records: Vec<EpochRecord>,
}

#[derive(Serialize)]
struct CsvRow {
    epoch: usize,
    train_loss: f64,
    train_acc: f64,
    val_loss: f64,
    val_acc: f64,
    lr: f64,
}

impl TrainingHistory {
    pub fn push(&mut self, record: EpochRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.epoch <= last.epoch {
                return Err(Error::Training(format!(
                    "epoch {} recorded after epoch {}",
                    record.epoch, last.epoch
                )));
            }
            if record.lr > last.lr {
                return Err(Error::Training(format!(
                    "learning rate rose from {} to {} at epoch {}",
                    last.lr, record.lr, record.epoch
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.records {
            w.serialize(CsvRow {
                epoch: r.epoch,
                train_loss: r.train_loss,
                train_acc: r.train_acc,
                val_loss: r.val_loss,
                val_acc: r.val_acc,
                lr: r.lr,
            })?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// `history.csv`, `history.json`, `accuracy.png` and `loss.png` under `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.write_csv(&dir.join("history.csv"))?;
        self.write_json(&dir.join("history.json"))?;
        if !self.is_empty() {
            self.plot(
                &dir.join("accuracy.png"),
                "Training vs Validation Accuracy",
                "accuracy",
                |r| (r.train_acc, r.val_acc),
            )?;
            self.plot(&dir.join("loss.png"), "Training vs Validation Loss", "loss", |r| {
                (r.train_loss, r.val_loss)
            })?;
        }
        Ok(())
    }

    fn plot(&self, path: &Path, title: &str, y_label: &str, pick: impl Fn(&EpochRecord) -> (f64, f64)) -> Result<()> {
        ensure_font();
        let render_err = |e: String| Error::Render {
            path: path.to_path_buf(),
            message: e,
        };
        let pairs: Vec<(f64, f64)> = self.records.iter().map(&pick).collect();
        let finite = pairs.iter().flat_map(|&(a, b)| [a, b]).filter(|v| v.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
        let pad = ((hi - lo) * 0.05).max(1e-3);
        let last = self.records.last().map(|r| r.epoch).unwrap_or(1).max(2);
        let first = self.records.first().map(|r| r.epoch).unwrap_or(1);

        let root = BitMapBackend::new(path, (800, 560)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| render_err(e.to_string()))?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, (FONT_FAMILY, 24))
            .margin(16)
            .x_label_area_size(40)
            .y_label_area_size(60)
            .build_cartesian_2d(first as f64..last as f64, (lo - pad)..(hi + pad))
            .map_err(|e| render_err(e.to_string()))?;
        chart
            .configure_mesh()
            .x_desc("epoch")
            .y_desc(y_label)
            .label_style((FONT_FAMILY, 14))
            .draw()
            .map_err(|e| render_err(e.to_string()))?;
        let series = [("training", 0usize, BLUE), ("validation", 1, RED)];
        for (name, idx, color) in series {
            let pts: Vec<(f64, f64)> = self
                .records
                .iter()
                .zip(&pairs)
                .map(|(r, p)| (r.epoch as f64, if idx == 0 { p.0 } else { p.1 }))
                .filter(|(_, v)| v.is_finite())
                .collect();
            chart
                .draw_series(LineSeries::new(pts, color.stroke_width(2)))
                .map_err(|e| render_err(e.to_string()))?
                .label(name)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        }
        chart
            .configure_series_labels()
            .label_font((FONT_FAMILY, 14))
            .border_style(BLACK)
            .background_style(WHITE.mix(0.8))
            .draw()
            .map_err(|e| render_err(e.to_string()))?;
        root.present().map_err(|e| render_err(e.to_string()))?;
        Ok(())
    }
}
