//! Draw a few random augmentations of one image and save them side by side.
//!
//!     cargo run --example augmentation_preview -- leaf.jpg preview.png

use std::path::PathBuf;

use image::{imageops, Rgb, RgbImage};
use leafnet::augmentation::{apply_transform, load_sample, sample_transform, AugmentationPolicy};
use leafnet::seed;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let side = 160;
    let source = match args.next() {
        Some(p) => load_sample(&PathBuf::from(p), (side, side), false)?,
        // A gradient with a marker in one corner makes rotations and flips easy to read.
        None => RgbImage::from_fn(side, side, |x, y| {
            if x < 30 && y < 30 {
                Rgb([220, 30, 30])
            } else {
                Rgb([(x * 255 / side) as u8, 140, (y * 255 / side) as u8])
            }
        }),
    };
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("augmentation_preview.png"));

    let policy = AugmentationPolicy::default();
    let views = 6;
    let mut sheet = RgbImage::from_pixel(side * (views + 1), side, Rgb([255, 255, 255]));
    imageops::replace(&mut sheet, &source, 0, 0);
    for v in 0..views {
        let mut rng = seed::rng(0, seed::AUGMENT, &[0, v as u64]);
        let p = sample_transform(&policy, (side, side), &mut rng);
        println!(
            "view {v}: rotate {:+6.1}°  shift ({:+5.1}, {:+5.1}) px  shear {:+5.1}°  flip {}",
            p.angle, p.dx, p.dy, p.shear, p.flip
        );
        let warped = apply_transform(&source, &p, policy.fill_mode, policy.fill_value);
        imageops::replace(&mut sheet, &warped, (side * (v + 1)) as i64, 0);
    }
    sheet.save(&out)?;
    println!("wrote {}", out.display());
    Ok(())
}
