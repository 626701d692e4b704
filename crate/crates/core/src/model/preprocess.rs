//! Image → tensor contract shared by training, evaluation and prediction.

use candle_core::{DType, Device, Tensor};
use image::imageops::{self, FilterType};
use image::{DynamicImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Channel statistics of the ImageNet training set, used by torchvision weights.
pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `(x / 255 - mean) / std` per channel.
    Imagenet,
    /// `x / 255`.
    UnitRange,
}

impl Normalization {
    pub fn name(&self) -> &'static str {
        match self {
            Normalization::Imagenet => "imagenet",
            Normalization::UnitRange => "unit_range",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "imagenet" => Some(Normalization::Imagenet),
            "unit_range" => Some(Normalization::UnitRange),
            _ => None,
        }
    }

    fn scale(&self, channel: usize, v: u8) -> f32 {
        let x = f32::from(v) / 255.0;
        match self {
            Normalization::Imagenet => (x - IMAGENET_MEAN[channel]) / IMAGENET_STD[channel],
            Normalization::UnitRange => x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessSpec {
    /// `(height, width)` in pixels.
    pub target_size: (u32, u32),
    pub normalization: Normalization,
}

impl PreprocessSpec {
    pub fn new(target_size: (u32, u32), normalization: Normalization) -> Result<Self> {
        if target_size.0 == 0 || target_size.1 == 0 {
            return Err(Error::config(format!(
                "target size must be positive, got {}x{}",
                target_size.0, target_size.1
            )));
        }
        Ok(Self {
            target_size,
            normalization,
        })
    }

    pub fn square(side: u32) -> Result<Self> {
        Self::new((side, side), Normalization::Imagenet)
    }
}

/// Converts to 8-bit RGB. Grayscale or alpha inputs are coerced with a warning,
/// or rejected when `strict` is set.
pub fn coerce_rgb(image: DynamicImage, strict: bool) -> Result<RgbImage> {
    let color = image.color();
    if color.channel_count() != 3 || color.has_alpha() {
        if strict {
            return Err(Error::Shape {
                expected: "3-channel RGB image".into(),
                actual: format!("{color:?}"),
            });
        }
        log::warn!("coercing {color:?} image to RGB");
    }
    Ok(match image {
        DynamicImage::ImageRgb8(rgb) => rgb,
        other => other.to_rgb8(),
    })
}

/// Bilinear resize to `(height, width)`; a no-op when the size already matches.
pub fn resize_rgb(image: &RgbImage, size: (u32, u32)) -> RgbImage {
    let (h, w) = size;
    if image.height() == h && image.width() == w {
        return image.clone();
    }
    imageops::resize(image, w, h, FilterType::Triangle)
}

/// Packs an RGB image into a normalised `(3, H, W)` f32 tensor.
pub fn to_tensor(image: &RgbImage, normalization: Normalization, device: &Device) -> Result<Tensor> {
    let (w, h) = image.dimensions();
    let plane = (w * h) as usize;
    let mut data = vec![0f32; 3 * plane];
    for (i, px) in image.pixels().enumerate() {
        for c in 0..3 {
            data[c * plane + i] = normalization.scale(c, px.0[c]);
        }
    }
    Ok(Tensor::from_vec(data, (3, h as usize, w as usize), device)?)
}

/// Decoded image → resized, normalised `(3, H, W)` tensor.
pub fn preprocess(image: DynamicImage, spec: &PreprocessSpec, strict: bool, device: &Device) -> Result<Tensor> {
    let rgb = coerce_rgb(image, strict)?;
    to_tensor(&resize_rgb(&rgb, spec.target_size), spec.normalization, device)
}

/// Stacks `(3, H, W)` tensors into a `(B, 3, H, W)` batch of the given dtype.
pub fn stack_batch(items: &[Tensor], dtype: DType) -> Result<Tensor> {
    if items.is_empty() {
        return Err(Error::Shape {
            expected: "at least one image".into(),
            actual: "empty batch".into(),
        });
    }
    Ok(Tensor::stack(items, 0)?.to_dtype(dtype)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, Rgb};

    fn gradient(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| Rgb([(x % 256) as u8, (y % 256) as u8, ((x + y) % 256) as u8]))
    }

    #[test]
    fn resizes_to_target() {
        let img = DynamicImage::ImageRgb8(gradient(700, 500));
        let spec = PreprocessSpec::square(256).unwrap();
        let t = preprocess(img, &spec, true, &Device::Cpu).unwrap();
        assert_eq!(t.dims(), &[3, 256, 256]);

        let img = DynamicImage::ImageRgb8(gradient(700, 500));
        let spec = PreprocessSpec::square(224).unwrap();
        let t = preprocess(img, &spec, true, &Device::Cpu).unwrap();
        assert_eq!(t.dims(), &[3, 224, 224]);
    }

    #[test]
    fn same_size_only_rescales() {
        let img = gradient(256, 256);
        assert_eq!(resize_rgb(&img, (256, 256)), img);
        let t = to_tensor(&img, Normalization::UnitRange, &Device::Cpu).unwrap();
        let v = t.to_vec3::<f32>().unwrap();
        assert_eq!(v[0][3][7], 7.0 / 255.0);
        assert_eq!(v[1][3][7], 3.0 / 255.0);
    }

    #[test]
    fn imagenet_normalisation() {
        let img = RgbImage::from_pixel(1, 1, Rgb([255, 0, 128]));
        let v = to_tensor(&img, Normalization::Imagenet, &Device::Cpu)
            .unwrap()
            .flatten_all()
            .unwrap()
            .to_vec1::<f32>()
            .unwrap();
        assert!((v[0] - (1.0 - 0.485) / 0.229).abs() < 1e-6);
        assert!((v[1] - (0.0 - 0.456) / 0.224).abs() < 1e-6);
        assert!((v[2] - (128.0 / 255.0 - 0.406) / 0.225).abs() < 1e-6);
    }

    #[test]
    fn grayscale_is_coerced_unless_strict() {
        let gray = DynamicImage::ImageLuma8(GrayImage::from_pixel(4, 4, image::Luma([9])));
        assert!(coerce_rgb(gray.clone(), true).is_err());
        let rgb = coerce_rgb(gray, false).unwrap();
        assert_eq!(rgb.get_pixel(0, 0).0, [9, 9, 9]);
    }

    #[test]
    fn rejects_empty_target() {
        assert!(PreprocessSpec::new((0, 10), Normalization::Imagenet).is_err());
    }
}
