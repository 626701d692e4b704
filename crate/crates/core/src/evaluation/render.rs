use std::path::Path;

use plotters::prelude::*;
use plotters::style::text_anchor::{HPos, Pos, VPos};

use super::metrics::ConfusionMatrix;
use crate::plot::{ensure_font, FONT_FAMILY};
use crate::{Error, Result};

const CELL: i32 = 110;
const LEFT: i32 = 190;
const TOP: i32 = 70;
const BOTTOM: i32 = 90;
const RIGHT: i32 = 30;

/// White → dark blue by count relative to the largest cell.
fn shade(frac: f64) -> RGBColor {
    let f = frac.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * f).round() as u8;
    RGBColor(lerp(247.0, 8.0), lerp(251.0, 48.0), lerp(255.0, 107.0))
}

/// Heatmap PNG with class names on both axes and the count in every cell.
pub fn render_confusion(cm: &ConfusionMatrix, path: &Path) -> Result<()> {
    ensure_font();
    let n = cm.n_classes() as i32;
    let size = ((LEFT + n * CELL + RIGHT) as u32, (TOP + n * CELL + BOTTOM) as u32);
    let err = |e: String| Error::Render {
        path: path.to_path_buf(),
        message: e,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        if !parent.is_dir() {
            return Err(err(format!("directory {} does not exist", parent.display())));
        }
    }
    let root = BitMapBackend::new(path, size).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(e.to_string()))?;

    let max = cm.counts.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let title = TextStyle::from((FONT_FAMILY, 22).into_font()).pos(Pos::new(HPos::Center, VPos::Center));
    let label = TextStyle::from((FONT_FAMILY, 15).into_font());
    let axis = TextStyle::from((FONT_FAMILY, 17).into_font()).pos(Pos::new(HPos::Center, VPos::Center));

    root.draw(&Text::new("Confusion Matrix", ((size.0 / 2) as i32, 26), title))
        .map_err(|e| err(e.to_string()))?;

    for (i, row) in cm.counts.iter().enumerate() {
        for (j, &count) in row.iter().enumerate() {
            let (x0, y0) = (LEFT + j as i32 * CELL, TOP + i as i32 * CELL);
            let frac = count as f64 / max;
            root.draw(&Rectangle::new([(x0, y0), (x0 + CELL, y0 + CELL)], shade(frac).filled()))
                .map_err(|e| err(e.to_string()))?;
            root.draw(&Rectangle::new([(x0, y0), (x0 + CELL, y0 + CELL)], BLACK.mix(0.3)))
                .map_err(|e| err(e.to_string()))?;
            let ink = if frac > 0.5 { WHITE } else { BLACK };
            let style = TextStyle::from((FONT_FAMILY, 20).into_font())
                .color(&ink)
                .pos(Pos::new(HPos::Center, VPos::Center));
            root.draw(&Text::new(count.to_string(), (x0 + CELL / 2, y0 + CELL / 2), style))
                .map_err(|e| err(e.to_string()))?;
        }
    }

    for (k, name) in cm.class_names.iter().enumerate() {
        let centre = k as i32 * CELL + CELL / 2;
        root.draw(&Text::new(
            name.clone(),
            (LEFT - 10, TOP + centre),
            label.clone().pos(Pos::new(HPos::Right, VPos::Center)),
        ))
        .map_err(|e| err(e.to_string()))?;
        root.draw(&Text::new(
            name.clone(),
            (LEFT + centre, TOP + n * CELL + 10),
            label.clone().pos(Pos::new(HPos::Center, VPos::Top)),
        ))
        .map_err(|e| err(e.to_string()))?;
    }
    root.draw(&Text::new("Predicted", (LEFT + n * CELL / 2, TOP + n * CELL + 55), axis.clone()))
        .map_err(|e| err(e.to_string()))?;
    root.draw(&Text::new("True", (40, TOP + n * CELL / 2), axis))
        .map_err(|e| err(e.to_string()))?;
    root.present().map_err(|e| err(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm() -> ConfusionMatrix {
        ConfusionMatrix {
            class_names: ["apple_scab", "black_rot", "cedar_apple_rust", "healthy"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            counts: vec![vec![124, 1, 0, 1], vec![0, 124, 0, 0], vec![0, 1, 54, 0], vec![0, 0, 0, 329]],
        }
    }

    #[test]
    fn renders_a_png() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cm.png");
        render_confusion(&cm(), &path).unwrap();
        let img = image::open(&path).unwrap();
        assert_eq!(img.width(), (LEFT + 4 * CELL + RIGHT) as u32);
        // The largest count gets the darkest shade, an empty cell stays near white.
        let rgb = img.to_rgb8();
        let full = rgb.get_pixel((LEFT + 3 * CELL + 5) as u32, (TOP + 3 * CELL + 5) as u32).0;
        assert_eq!(full, [8, 48, 107]);
        let empty = rgb.get_pixel((LEFT + 2 * CELL + 5) as u32, (TOP + 5) as u32).0;
        assert_eq!(empty, [247, 251, 255]);
    }

    #[test]
    fn rerender_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
        render_confusion(&cm(), &a).unwrap();
        render_confusion(&cm(), &b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn missing_directory_is_an_error() {
        assert!(render_confusion(&cm(), Path::new("/nonexistent/dir/cm.png")).is_err());
    }
}
