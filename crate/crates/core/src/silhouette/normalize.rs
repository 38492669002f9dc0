//! Height normalisation and horizontal centering of cropped masks.
//!
//! The mask is cut to its first and last foreground rows, rescaled isotropically
//! to [`SILHOUETTE_SIZE`] rows (output width rounded half up), resampled
//! bilinearly with corner-aligned coordinates and thresholded at 0.5, then
//! pasted on a square canvas so that the median foreground column lands on
//! the canvas center. The extreme output rows use a footprint test instead of
//! point sampling so a thin head or foot row is never lost when downscaling.

use alloc::vec::Vec;

use num_traits::Float;

use super::SilhouetteFrame;
use crate::image::{resize_bilinear_aligned, Image, Mask};
use crate::{Error, Result};

/// Side of the square silhouette canvas.
pub const SILHOUETTE_SIZE: usize = 224;
/// Canvas column that receives the median foreground column.
pub const CENTER_COLUMN: usize = SILHOUETTE_SIZE / 2;

/// Placement computed for one mask; reusable on the matching color crop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizeGeometry {
    pub top: usize,
    pub bottom: usize,
    pub scaled_width: usize,
    /// Canvas column of scaled column 0.
    pub offset: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub frame: SilhouetteFrame,
    pub geometry: NormalizeGeometry,
    /// Foreground pixels that fell outside the canvas.
    pub clipped: usize,
}

fn round_half_up(v: f64) -> usize {
    Float::floor(v + 0.5) as usize
}

/// Rows `[top, bottom]` holding foreground, or `None` for an empty mask.
pub fn vertical_extent(mask: &Mask) -> Option<(usize, usize)> {
    let w = mask.width();
    let row_has = |y: usize| mask.data()[y * w..(y + 1) * w].iter().any(|&v| v != 0);
    let top = (0..mask.height()).find(|&y| row_has(y))?;
    let bottom = (0..mask.height()).rev().find(|&y| row_has(y))?;
    Some((top, bottom))
}

/// Lower median of the foreground column indices, found by cumulative sum
/// over the column histogram.
pub fn median_column(mask: &Mask) -> Option<usize> {
    let (w, h) = mask.dims();
    let mut hist = alloc::vec![0usize; w];
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y, 0) != 0 {
                hist[x] += 1;
            }
        }
    }
    let total: usize = hist.iter().sum();
    if total == 0 {
        return None;
    }
    let target = (total - 1) / 2;
    let mut acc = 0;
    for (x, &n) in hist.iter().enumerate() {
        acc += n;
        if acc > target {
            return Some(x);
        }
    }
    None
}

fn rescale_mask(src: &Mask, top: usize, bottom: usize, out_w: usize) -> Mask {
    let w = src.width();
    let hc = bottom - top + 1;
    let plane: Vec<f32> = src.data()[top * w..(bottom + 1) * w].iter().map(|&v| f32::from(v)).collect();
    let scaled = resize_bilinear_aligned(&plane, w, hc, out_w, SILHOUETTE_SIZE);
    let mut out = Image::from_vec(out_w, SILHOUETTE_SIZE, 1, scaled.iter().map(|&v| u8::from(v >= 0.5)).collect())
        .expect("sizes agree");

    // extreme rows: any foreground in the sampled footprint
    let step = if out_w > 1 && w > 1 { (w - 1) as f64 / (out_w - 1) as f64 } else { 0.0 };
    let half = (step / 2.0).max(0.5);
    for (oy, sy) in [(0, top), (SILHOUETTE_SIZE - 1, bottom)] {
        let row = &src.data()[sy * w..(sy + 1) * w];
        for ox in 0..out_w {
            let c = ox as f64 * step;
            let lo = Float::ceil(c - half).max(0.0) as usize;
            let hi = (Float::floor(c + half) as usize).min(w - 1);
            let hit = (lo..=hi).any(|x| row[x] != 0);
            out.set(ox, oy, 0, u8::from(hit));
        }
    }
    out
}

/// Normalises one cropped mask. Empty masks are reported as
/// [`Error::EmptyMask`] so the caller can drop the frame.
pub fn normalize_silhouette(mask_crop: &Mask, frame_index: u64, trajectory_point: (f64, f64)) -> Result<Normalized> {
    let (top, bottom) = vertical_extent(mask_crop).ok_or(Error::EmptyMask)?;
    let hc = bottom - top + 1;
    let scale = SILHOUETTE_SIZE as f64 / hc as f64;
    let out_w = round_half_up(mask_crop.width() as f64 * scale).max(1);
    let scaled = rescale_mask(mask_crop, top, bottom, out_w);
    let median = median_column(&scaled).ok_or(Error::EmptyMask)?;
    let offset = CENTER_COLUMN as i64 - median as i64;

    let mut grid = Image::new(SILHOUETTE_SIZE, SILHOUETTE_SIZE, 1);
    let mut clipped = 0;
    for y in 0..SILHOUETTE_SIZE {
        for x in 0..out_w {
            let v = scaled.get(x, y, 0);
            if v == 0 {
                continue;
            }
            let cx = x as i64 + offset;
            if (0..SILHOUETTE_SIZE as i64).contains(&cx) {
                grid.set(cx as usize, y, 0, 1);
            } else {
                clipped += 1;
            }
        }
    }
    Ok(Normalized {
        frame: SilhouetteFrame {
            grid,
            frame_index,
            trajectory_point,
        },
        geometry: NormalizeGeometry {
            top,
            bottom,
            scaled_width: out_w,
            offset,
        },
        clipped,
    })
}

/// Places a color (or gray) crop with the geometry found for its mask, so
/// appearance variants line up pixel for pixel with the silhouette.
pub fn apply_geometry(crop: &Image<u8>, g: &NormalizeGeometry) -> Image<u8> {
    let (w, ch) = (crop.width(), crop.channels());
    let hc = g.bottom - g.top + 1;
    let mut out = Image::new(SILHOUETTE_SIZE, SILHOUETTE_SIZE, ch);
    for c in 0..ch {
        let plane: Vec<f32> = (g.top..=g.bottom)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| f32::from(crop.get(x, y, c)))
            .collect();
        let scaled = resize_bilinear_aligned(&plane, w, hc, g.scaled_width, SILHOUETTE_SIZE);
        for y in 0..SILHOUETTE_SIZE {
            for x in 0..g.scaled_width {
                let cx = x as i64 + g.offset;
                if (0..SILHOUETTE_SIZE as i64).contains(&cx) {
                    let v = Float::round(scaled[y * g.scaled_width + x]).clamp(0.0, 255.0) as u8;
                    out.set(cx as usize, y, c, v);
                }
            }
        }
    }
    out
}
