#![allow(dead_code)]

use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DIRS: [&str; 4] = ["Apple___Apple_scab", "Apple___Black_rot", "Apple___Cedar_apple_rust", "Apple___healthy"];

/// Writes a PlantVillage-shaped folder of noisy, class-tinted squares so the
/// examples run without the real dataset.
pub fn fake_leaves(root: &Path, per_class: usize, side: u32) -> anyhow::Result<()> {
    let tints = [[120u8, 120, 60], [70, 40, 30], [220, 120, 30], [50, 170, 60]];
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for (dir, tint) in DIRS.iter().zip(tints) {
        fs::create_dir_all(root.join(dir))?;
        for k in 0..per_class {
            let cx = rng.random_range(side / 4..3 * side / 4) as i64;
            let cy = rng.random_range(side / 4..3 * side / 4) as i64;
            let img = RgbImage::from_fn(side, side, |x, y| {
                let d = (x as i64 - cx).pow(2) + (y as i64 - cy).pow(2);
                let base = if d < (side as i64 / 10).pow(2) { [30, 25, 20] } else { tint };
                Rgb(base.map(|v| (v as i32 + rng.random_range(-20..=20)).clamp(0, 255) as u8))
            });
            img.save(root.join(dir).join(format!("{k:03}.png")))?;
        }
    }
    Ok(())
}
