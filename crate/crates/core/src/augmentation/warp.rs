use image::{DynamicImage, RgbImage};

use super::{FillMode, TransformParams};
use crate::{Error, Result};

/// Inverse of `shift ∘ shear ∘ rotate ∘ flip` about the image centre, as a 2x2
/// matrix plus the shift to undo first.
struct InverseMap {
    m: [[f64; 2]; 2],
    shift: (f64, f64),
    centre: (f64, f64),
}

impl InverseMap {
    fn new(p: &TransformParams, width: u32, height: u32) -> Self {
        let (s, c) = p.angle.to_radians().sin_cos();
        let k = p.shear.to_radians().tan();
        let f = if p.flip { -1.0 } else { 1.0 };
        // R^-1 = [[c, -s], [s, c]], S^-1 = [[1, -k], [0, 1]], F^-1 = diag(f, 1)
        let rs = [[c, -c * k - s], [s, -s * k + c]];
        let m = [[f * rs[0][0], f * rs[0][1]], rs[1]];
        Self {
            m,
            shift: (p.dx, p.dy),
            centre: ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0),
        }
    }

    /// Source coordinates `(x, y)` for output pixel `(col, row)`.
    fn source(&self, col: u32, row: u32) -> (f64, f64) {
        let qx = col as f64 - self.centre.0 - self.shift.0;
        let qy = row as f64 - self.centre.1 - self.shift.1;
        (
            self.m[0][0] * qx + self.m[0][1] * qy + self.centre.0,
            self.m[1][0] * qx + self.m[1][1] * qy + self.centre.1,
        )
    }
}

/// Maps an out-of-range index back into `[0, n)`, or `None` for constant fill.
fn resolve(i: i64, n: u32, mode: FillMode) -> Option<u32> {
    let n = n as i64;
    if (0..n).contains(&i) {
        return Some(i as u32);
    }
    match mode {
        FillMode::Constant => None,
        FillMode::Nearest => Some(i.clamp(0, n - 1) as u32),
        FillMode::Reflect => {
            let period = 2 * n;
            let r = i.rem_euclid(period);
            Some(if r < n { r } else { period - 1 - r } as u32)
        }
    }
}

/// Applies flip, rotation, shear and shift (in that order) with bilinear
/// sampling. Pixels that land outside the source are filled per `fill`.
pub fn apply_transform(image: &RgbImage, params: &TransformParams, fill: FillMode, fill_value: u8) -> RgbImage {
    if params.is_identity() {
        return image.clone();
    }
    let (w, h) = image.dimensions();
    let map = InverseMap::new(params, w, h);
    let constant = [fill_value as f64; 3];
    let fetch = |x: i64, y: i64| -> [f64; 3] {
        match (resolve(x, w, fill), resolve(y, h, fill)) {
            (Some(x), Some(y)) => {
                let p = image.get_pixel(x, y).0;
                [p[0] as f64, p[1] as f64, p[2] as f64]
            }
            _ => constant,
        }
    };
    RgbImage::from_fn(w, h, |col, row| {
        let (sx, sy) = map.source(col, row);
        // Snap values within rounding noise of a grid point so exact
        // permutations (flips, quarter turns) stay pixel-exact.
        let snap = |v: f64| if (v - v.round()).abs() < 1e-9 { v.round() } else { v };
        let (sx, sy) = (snap(sx), snap(sy));
        let (x0, y0) = (sx.floor(), sy.floor());
        let (fx, fy) = (sx - x0, sy - y0);
        let (x0, y0) = (x0 as i64, y0 as i64);
        let mut out = [0.0f64; 3];
        for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
            if wy == 0.0 {
                continue;
            }
            for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                if wx == 0.0 {
                    continue;
                }
                let v = fetch(x0 + dx, y0 + dy);
                for ch in 0..3 {
                    out[ch] += wx * wy * v[ch];
                }
            }
        }
        image::Rgb(out.map(|v| v.round().clamp(0.0, 255.0) as u8))
    })
}

/// Like [`apply_transform`] but accepts a decoded image of unknown layout and
/// refuses anything that is not three-channel.
pub fn apply_transform_dynamic(
    image: &DynamicImage,
    params: &TransformParams,
    fill: FillMode,
    fill_value: u8,
) -> Result<RgbImage> {
    let color = image.color();
    if color.channel_count() != 3 || color.has_alpha() {
        return Err(Error::Shape {
            expected: "3-channel RGB image".into(),
            actual: format!("{color:?}"),
        });
    }
    Ok(apply_transform(&image.to_rgb8(), params, fill, fill_value))
}
