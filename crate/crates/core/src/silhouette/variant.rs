//! Appearance variants built from a color crop and its mask: color or binary
//! pedestrian, color or subtracted background, and quantised grayscale.

use alloc::format;

use num_traits::Float;

use crate::image::{Image, Mask};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PedestrianMode {
    Color,
    Binary,
    GrayscaleQuantized { bins: u16 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BackgroundMode {
    Color,
    Subtracted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InputVariant {
    pub pedestrian: PedestrianMode,
    pub background: BackgroundMode,
}

impl InputVariant {
    pub const SILHOUETTE: InputVariant = InputVariant {
        pedestrian: PedestrianMode::Binary,
        background: BackgroundMode::Subtracted,
    };

    pub fn validate(&self) -> Result<()> {
        if let PedestrianMode::GrayscaleQuantized { bins } = self.pedestrian {
            if !(2..=256).contains(&bins) {
                return Err(Error::InvalidParameter(format!("quantization needs 2..=256 bins, got {bins}")));
            }
        }
        Ok(())
    }
}

/// Output of [`compose_variant`].
#[derive(Debug, Clone, PartialEq)]
pub enum Composite {
    /// Three-channel 8-bit image.
    Color(Image<u8>),
    /// Single-channel 8-bit image.
    Gray(Image<u8>),
    /// 0/1 mask.
    Binary(Mask),
}

impl Composite {
    pub fn image(&self) -> &Image<u8> {
        match self {
            Composite::Color(i) | Composite::Gray(i) | Composite::Binary(i) => i,
        }
    }
}

/// Luminance of an RGB sample, rounded to the nearest level.
pub fn luminance(rgb: &[u8]) -> u8 {
    let y = 0.299 * f64::from(rgb[0]) + 0.587 * f64::from(rgb[1]) + 0.114 * f64::from(rgb[2]);
    Float::round(y).clamp(0.0, 255.0) as u8
}

/// Maps a gray level to one of `bins` uniform bins over `[0, 255]` and returns
/// that bin's output level. Levels spread over the full range and each level
/// falls back in its own bin, so quantising twice changes nothing.
pub fn quantize_level(v: u8, bins: u16) -> u8 {
    let m = u32::from(bins);
    let bin = (u32::from(v) * m / 256).min(m - 1);
    ((bin * 255 + m - 2) / (m - 1)) as u8
}

/// Gray conversion of a 1- or 3-channel pixel.
fn gray(px: &[u8]) -> u8 {
    if px.len() >= 3 {
        luminance(px)
    } else {
        px[0]
    }
}

pub fn compose_variant(color_crop: &Image<u8>, mask_crop: &Mask, variant: InputVariant) -> Result<Composite> {
    variant.validate()?;
    if !color_crop.same_size(mask_crop) || mask_crop.channels() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "color {}x{} vs mask {}x{}x{}",
            color_crop.width(),
            color_crop.height(),
            mask_crop.width(),
            mask_crop.height(),
            mask_crop.channels()
        )));
    }
    let (w, h) = color_crop.dims();
    let on = |x: usize, y: usize| mask_crop.get(x, y, 0) != 0;
    let rgb = |x: usize, y: usize, c: usize| {
        let px = color_crop.pixel(x, y);
        px[c.min(px.len() - 1)]
    };
    use BackgroundMode as B;
    use PedestrianMode as P;
    Ok(match (variant.pedestrian, variant.background) {
        (P::Color, B::Color) => {
            Composite::Color(Image::from_fn(w, h, 3, rgb))
        }
        (P::Color, B::Subtracted) => {
            Composite::Color(Image::from_fn(w, h, 3, |x, y, c| if on(x, y) { rgb(x, y, c) } else { 0 }))
        }
        (P::Binary, B::Color) => {
            Composite::Color(Image::from_fn(w, h, 3, |x, y, c| if on(x, y) { 255 } else { rgb(x, y, c) }))
        }
        (P::Binary, B::Subtracted) => Composite::Binary(mask_crop.clone()),
        (P::GrayscaleQuantized { bins }, B::Subtracted) => Composite::Gray(Image::from_fn(w, h, 1, |x, y, _| {
            if on(x, y) {
                quantize_level(gray(color_crop.pixel(x, y)), bins)
            } else {
                0
            }
        })),
        (P::GrayscaleQuantized { bins }, B::Color) => Composite::Color(Image::from_fn(w, h, 3, |x, y, c| {
            if on(x, y) {
                quantize_level(gray(color_crop.pixel(x, y)), bins)
            } else {
                rgb(x, y, c)
            }
        })),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Image<u8>, Mask) {
        let color = Image::from_fn(6, 4, 3, |x, y, c| (x * 40 + y * 10 + c) as u8);
        let mask = Image::from_fn(6, 4, 1, |x, _, _| u8::from((2..4).contains(&x)));
        (color, mask)
    }

    fn variant(p: PedestrianMode, b: BackgroundMode) -> InputVariant {
        InputVariant {
            pedestrian: p,
            background: b,
        }
    }

    #[test]
    fn binary_subtracted_is_the_mask() {
        let (color, mask) = fixture();
        let out = compose_variant(&color, &mask, InputVariant::SILHOUETTE).unwrap();
        assert_eq!(out, Composite::Binary(mask));
    }

    #[test]
    fn color_combinations() {
        let (color, mask) = fixture();
        let full = compose_variant(&color, &mask, variant(PedestrianMode::Color, BackgroundMode::Color)).unwrap();
        assert_eq!(full.image(), &color);

        let sub = compose_variant(&color, &mask, variant(PedestrianMode::Color, BackgroundMode::Subtracted)).unwrap();
        assert_eq!(sub.image().pixel(2, 1), color.pixel(2, 1));
        assert_eq!(sub.image().pixel(0, 1), &[0, 0, 0]);

        let white = compose_variant(&color, &mask, variant(PedestrianMode::Binary, BackgroundMode::Color)).unwrap();
        assert_eq!(white.image().pixel(3, 0), &[255, 255, 255]);
        assert_eq!(white.image().pixel(5, 2), color.pixel(5, 2));
    }

    #[test]
    fn two_bins_separate_dark_and_bright() {
        assert_ne!(quantize_level(10, 2), quantize_level(200, 2));
        assert_eq!(quantize_level(10, 2), 0);
        assert_eq!(quantize_level(200, 2), 255);
    }

    #[test]
    fn quantization_is_idempotent_for_every_level() {
        for bins in 2..=256u16 {
            for v in 0..=255u8 {
                let q = quantize_level(v, bins);
                assert_eq!(quantize_level(q, bins), q, "bins {bins} level {v}");
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let (color, mask) = fixture();
        let bad = variant(PedestrianMode::GrayscaleQuantized { bins: 1 }, BackgroundMode::Subtracted);
        assert!(compose_variant(&color, &mask, bad).is_err());
        let small = Image::new(5, 4, 1);
        assert!(compose_variant(&color, &small, InputVariant::SILHOUETTE).is_err());
    }

    #[test]
    fn luminance_weights() {
        assert_eq!(luminance(&[255, 255, 255]), 255);
        assert_eq!(luminance(&[100, 0, 0]), 30);
    }
}
