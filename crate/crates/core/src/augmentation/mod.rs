//! Runtime geometric augmentation: rotation, horizontal flip, width/height
//! shift and shear, re-drawn for every sample in every epoch.
//!
//! Nothing here writes images to disk; augmented pixels exist only in memory
//! for the batch being trained on.

mod stream;
mod warp;

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use stream::{augmented_stream, load_sample, AugmentedSample, AugmentedStream, BatchLoader, EpochStats, LoadedBatch};
pub use warp::{apply_transform, apply_transform_dynamic};

use crate::{Error, Result};

/// 0.2 rad expressed in degrees.
pub const DEFAULT_SHEAR_DEGREES: f64 = 0.2 * 180.0 / std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillMode {
    /// Repeat the edge pixel.
    Nearest,
    /// Mirror about the edge, edge pixel included (`abcd|dcba`).
    Reflect,
    /// Use `fill_value` for every channel.
    Constant,
}

impl fmt::Display for FillMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FillMode::Nearest => "nearest",
            FillMode::Reflect => "reflect",
            FillMode::Constant => "constant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationPolicy {
    /// Rotation angle is drawn from `[-rotation_range, rotation_range]` degrees.
    pub rotation_range: f64,
    pub width_shift_frac: f64,
    pub height_shift_frac: f64,
    /// Shear angle is drawn from `[-shear_range, shear_range]` degrees.
    pub shear_range: f64,
    pub horizontal_flip: bool,
    pub fill_mode: FillMode,
    /// Only read when `fill_mode` is `constant`.
    pub fill_value: u8,
    pub enabled: bool,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        Self {
            rotation_range: 30.0,
            width_shift_frac: 0.1,
            height_shift_frac: 0.1,
            shear_range: DEFAULT_SHEAR_DEGREES,
            horizontal_flip: true,
            fill_mode: FillMode::Nearest,
            fill_value: 0,
            enabled: true,
        }
    }
}

impl AugmentationPolicy {
    /// Every transform switched off.
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    /// Ranges all zero and no flip, but still `enabled`.
    pub fn degenerate() -> Self {
        Self {
            rotation_range: 0.0,
            width_shift_frac: 0.0,
            height_shift_frac: 0.0,
            shear_range: 0.0,
            horizontal_flip: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rotation_range", self.rotation_range), ("shear_range", self.shear_range)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(format!("{name} must be a non-negative number of degrees, got {v}")));
            }
        }
        if self.shear_range >= 90.0 {
            return Err(Error::config(format!("shear_range must be below 90 degrees, got {}", self.shear_range)));
        }
        for (name, v) in [("width_shift_frac", self.width_shift_frac), ("height_shift_frac", self.height_shift_frac)] {
            if !(0.0..=0.5).contains(&v) {
                return Err(Error::config(format!("{name} must be in [0, 0.5], got {v}")));
            }
        }
        Ok(())
    }
}

/// One concrete draw of the transforms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TransformParams {
    /// Degrees, counter-clockwise.
    pub angle: f64,
    /// Pixels, positive moves content right.
    pub dx: f64,
    /// Pixels, positive moves content down.
    pub dy: f64,
    /// Degrees; `x' = x + tan(shear) * y`.
    pub shear: f64,
    pub flip: bool,
}

impl TransformParams {
    pub const IDENTITY: TransformParams = TransformParams {
        angle: 0.0,
        dx: 0.0,
        dy: 0.0,
        shear: 0.0,
        flip: false,
    };

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }
}

fn symmetric<R: Rng + ?Sized>(rng: &mut R, range: f64) -> f64 {
    if range > 0.0 {
        rng.random_range(-range..=range)
    } else {
        0.0
    }
}

/// Draws parameters uniformly within the policy's ranges; the flip is a fair coin.
///
/// `size` is `(width, height)` of the image the draw will be applied to, since
/// shifts are configured as fractions but applied in pixels.
pub fn sample_transform<R: Rng + ?Sized>(policy: &AugmentationPolicy, size: (u32, u32), rng: &mut R) -> TransformParams {
    if !policy.enabled {
        return TransformParams::IDENTITY;
    }
    let angle = symmetric(rng, policy.rotation_range);
    let dx = symmetric(rng, policy.width_shift_frac) * size.0 as f64;
    let dy = symmetric(rng, policy.height_shift_frac) * size.1 as f64;
    let shear = symmetric(rng, policy.shear_range);
    let flip = policy.horizontal_flip && rng.random_bool(0.5);
    TransformParams {
        angle,
        dx,
        dy,
        shear,
        flip,
    }
}
