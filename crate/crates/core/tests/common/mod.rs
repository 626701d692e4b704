#![allow(dead_code)]

use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PLANTVILLAGE_DIRS: [&str; 4] =
    ["Apple___Apple_scab", "Apple___Black_rot", "Apple___Cedar_apple_rust", "Apple___healthy"];

/// Base colour per class: scab olive, rot dark brown, rust orange, healthy green.
const TINTS: [[u8; 3]; 4] = [[120, 120, 60], [70, 40, 30], [220, 120, 30], [50, 170, 60]];

/// `<root>/<PlantVillage dir>/<k>.png`: noisy tinted leaves with a few spots.
pub fn synthetic_dataset(root: &Path, per_class: usize, side: u32, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (c, dir) in PLANTVILLAGE_DIRS.iter().enumerate() {
        let class_dir = root.join(dir);
        fs::create_dir_all(&class_dir).unwrap();
        for k in 0..per_class {
            let mut img = RgbImage::new(side, side);
            for px in img.pixels_mut() {
                let t = TINTS[c];
                *px = Rgb(t.map(|v| (v as i32 + rng.random_range(-25..=25)).clamp(0, 255) as u8));
            }
            for _ in 0..3 {
                let (x, y) = (rng.random_range(0..side), rng.random_range(0..side));
                img.put_pixel(x, y, Rgb([20, 20, 20]));
            }
            img.save(class_dir.join(format!("{k:03}.png"))).unwrap();
        }
    }
}

/// Experiment TOML for a seeded-random backbone at a small resolution.
pub fn tiny_config(root: &Path, out: &Path, resolution: u32, max_epochs: usize) -> String {
    format!(
        r#"seed = 3
dataset_root = "{}"
output_dir = "{}"

[model]
input_resolution = {resolution}

[model.extractor]
pretrained = false
trainable = false

[training]
batch_size = 8
learning_rate = 0.001
max_epochs = {max_epochs}
"#,
        root.display(),
        out.display()
    )
}
