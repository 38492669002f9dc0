//! Minimal interleaved raster type shared by the silhouette and GEI code.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::{Error, Result};

/// Row-major interleaved image with `channels` samples per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<P> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<P>,
}

/// Single-channel image holding only 0 and 1.
pub type Mask = Image<u8>;

impl<P> Image<P> {
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn data(&self) -> &[P] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [P] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<P> {
        self.data
    }

    pub fn same_size<Q>(&self, other: &Image<Q>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

impl<P: Copy + Default> Image<P> {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![P::default(); width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<P>) -> Result<Self> {
        if channels == 0 || data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "buffer of {} samples for {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> P,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> P {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: P) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[P] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

}

impl Image<u8> {
    /// Number of nonzero samples (for masks: foreground pixels).
    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Scales a 0/1 mask to 0/255 for display or storage.
    pub fn mask_to_u8(&self) -> Image<u8> {
        let data = self.data.iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data,
        }
    }

    /// Thresholds an 8-bit single-channel image back to a 0/1 mask.
    pub fn to_mask(&self) -> Mask {
        let data = self.data.iter().map(|&v| u8::from(v >= 128)).collect();
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data,
        }
    }
}

/// Bilinear resize of a single-channel float plane with corner-aligned
/// sampling: output corners map exactly onto input corners.
pub fn resize_bilinear_aligned<F: Float>(
    src: &[F],
    src_w: usize,
    src_h: usize,
    dst_w: usize,
    dst_h: usize,
) -> Vec<F> {
    let scale = |dst: usize, src: usize| -> f64 {
        if dst > 1 && src > 1 {
            (src - 1) as f64 / (dst - 1) as f64
        } else {
            0.0
        }
    };
    let sx = scale(dst_w, src_w);
    let sy = scale(dst_h, src_h);
    let mut out = Vec::with_capacity(dst_w * dst_h);
    for oy in 0..dst_h {
        let fy = oy as f64 * sy;
        let y0 = (fy.floor() as usize).min(src_h - 1);
        let y1 = (y0 + 1).min(src_h - 1);
        let wy = F::from(fy - y0 as f64).unwrap();
        for ox in 0..dst_w {
            let fx = ox as f64 * sx;
            let x0 = (fx.floor() as usize).min(src_w - 1);
            let x1 = (x0 + 1).min(src_w - 1);
            let wx = F::from(fx - x0 as f64).unwrap();
            let one = F::one();
            let top = src[y0 * src_w + x0] * (one - wx) + src[y0 * src_w + x1] * wx;
            let bot = src[y1 * src_w + x0] * (one - wx) + src[y1 * src_w + x1] * wx;
            out.push(top * (one - wy) + bot * wy);
        }
    }
    out
}

/// Box-filter downsample of a single-channel plane. Each output cell averages
/// the source pixels in `[floor(i*src/dst), floor((i+1)*src/dst))`, widened
/// to at least one pixel.
pub fn downsample_area(src: &[f32], src_w: usize, src_h: usize, dst_w: usize, dst_h: usize) -> Vec<f32> {
    let span = |i: usize, dst: usize, src: usize| {
        let a = i * src / dst;
        let b = ((i + 1) * src / dst).max(a + 1).min(src);
        (a, b)
    };
    let mut out = Vec::with_capacity(dst_w * dst_h);
    for oy in 0..dst_h {
        let (y0, y1) = span(oy, dst_h, src_h);
        for ox in 0..dst_w {
            let (x0, x1) = span(ox, dst_w, src_w);
            let mut acc = 0.0f32;
            for y in y0..y1 {
                for x in x0..x1 {
                    acc += src[y * src_w + x];
                }
            }
            out.push(acc / ((y1 - y0) * (x1 - x0)) as f32);
        }
    }
    out
}
