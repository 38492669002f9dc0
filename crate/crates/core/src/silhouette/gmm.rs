//! Adaptive per-pixel Gaussian mixture background subtraction.
//!
//! Each pixel keeps up to `n_mixtures` isotropic Gaussian modes (weight, mean
//! per channel, variance). Modes are kept sorted by weight; the heaviest modes
//! whose cumulative weight stays under `background_ratio` describe the
//! background. Weights follow the recursive update with a Dirichlet-prior
//! pruning term, so modes that stop being observed decay and disappear.
//! Pixels that do not fit the background but look like a darkened copy of it
//! are labelled shadow and reported as background.

use alloc::vec;
use alloc::vec::Vec;
use alloc::format;

use super::ForegroundMask;
use crate::image::{Image, Mask};
use crate::{Error, Result};

/// Morphological clean-up applied to each mask after classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Morphology {
    #[default]
    None,
    /// 3x3 erosion followed by dilation.
    Open,
    /// 3x3 dilation followed by erosion.
    Close,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GmmParams {
    pub history: u32,
    /// Squared Mahalanobis threshold for the background decision.
    pub var_threshold: f32,
    /// Squared Mahalanobis threshold for assigning a sample to an existing mode.
    pub var_threshold_gen: f32,
    pub n_mixtures: usize,
    pub background_ratio: f32,
    pub var_init: f32,
    pub var_min: f32,
    pub var_max: f32,
    pub complexity_reduction: f32,
    pub detect_shadows: bool,
    pub shadow_threshold: f32,
    /// `None` uses `1 / history`.
    pub learning_rate: Option<f32>,
    pub morphology: Morphology,
}

impl Default for GmmParams {
    fn default() -> Self {
        Self {
            history: 500,
            var_threshold: 16.0,
            var_threshold_gen: 9.0,
            n_mixtures: 5,
            background_ratio: 0.9,
            var_init: 15.0,
            var_min: 4.0,
            var_max: 75.0,
            complexity_reduction: 0.05,
            detect_shadows: true,
            shadow_threshold: 0.5,
            learning_rate: None,
            morphology: Morphology::None,
        }
    }
}

impl GmmParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("gmm: {what}")));
        if self.history == 0 {
            return bad("history must be positive");
        }
        if self.n_mixtures == 0 {
            return bad("n_mixtures must be positive");
        }
        if !(self.var_min > 0.0 && self.var_min <= self.var_init && self.var_init <= self.var_max) {
            return bad("variances must satisfy 0 < var_min <= var_init <= var_max");
        }
        if let Some(lr) = self.learning_rate {
            if !(0.0..=1.0).contains(&lr) {
                return bad("learning_rate must lie in [0, 1]");
            }
        }
        Ok(())
    }

    fn alpha(&self) -> f32 {
        self.learning_rate.unwrap_or(1.0 / self.history as f32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Label {
    Background,
    Shadow,
    Foreground,
}

/// Background model for one video. Never share an instance across videos.
#[derive(Debug, Clone)]
pub struct BackgroundSubtractor {
    params: GmmParams,
    width: usize,
    height: usize,
    channels: usize,
    /// Number of active modes per pixel.
    modes_used: Vec<u8>,
    weight: Vec<f32>,
    variance: Vec<f32>,
    /// `pixels * n_mixtures * channels`.
    mean: Vec<f32>,
    frames_seen: u64,
}

impl BackgroundSubtractor {
    pub fn new(params: GmmParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            width: 0,
            height: 0,
            channels: 0,
            modes_used: Vec::new(),
            weight: Vec::new(),
            variance: Vec::new(),
            mean: Vec::new(),
            frames_seen: 0,
        })
    }

    pub fn frames_seen(&self) -> u64 {
        self.frames_seen
    }

    fn reset(&mut self, width: usize, height: usize, channels: usize) {
        let k = self.params.n_mixtures;
        let n = width * height;
        self.width = width;
        self.height = height;
        self.channels = channels;
        self.modes_used = vec![0; n];
        self.weight = vec![0.0; n * k];
        self.variance = vec![0.0; n * k];
        self.mean = vec![0.0; n * k * channels];
        self.frames_seen = 0;
    }

    /// Classifies `frame` against the current model, then folds it into the
    /// model. The first frame initialises the model.
    pub fn apply(&mut self, frame: &Image<u8>) -> Result<Mask> {
        if frame.width() == 0 || frame.height() == 0 {
            return Err(Error::EmptyInput("frame has no pixels"));
        }
        if self.frames_seen == 0 {
            self.reset(frame.width(), frame.height(), frame.channels());
        } else if (frame.width(), frame.height(), frame.channels()) != (self.width, self.height, self.channels) {
            return Err(Error::DimensionMismatch(format!(
                "frame {}x{}x{} vs model {}x{}x{}",
                frame.width(),
                frame.height(),
                frame.channels(),
                self.width,
                self.height,
                self.channels
            )));
        }
        self.frames_seen += 1;
        let alpha = self.params.alpha();
        let mut out = Image::new(self.width, self.height, 1);
        let mut sample = [0f32; 4];
        let ch = self.channels.min(4);
        for p in 0..self.width * self.height {
            for (c, s) in frame.data()[p * self.channels..p * self.channels + ch].iter().enumerate() {
                sample[c] = f32::from(*s);
            }
            let label = self.update_pixel(p, &sample[..ch], alpha);
            out.data_mut()[p] = u8::from(label == Label::Foreground);
        }
        Ok(match self.params.morphology {
            Morphology::None => out,
            Morphology::Open => dilate(&erode(&out)),
            Morphology::Close => erode(&dilate(&out)),
        })
    }

    fn update_pixel(&mut self, p: usize, x: &[f32], alpha: f32) -> Label {
        let prm = &self.params;
        let k = prm.n_mixtures;
        let ch = x.len();
        let w = &mut self.weight[p * k..(p + 1) * k];
        let var = &mut self.variance[p * k..(p + 1) * k];
        let mean = &mut self.mean[p * k * self.channels..(p + 1) * k * self.channels];
        let stride = self.channels;
        let mut nmodes = usize::from(self.modes_used[p]);

        let prune = -alpha * prm.complexity_reduction;
        let keep = 1.0 - alpha;
        let mut background = false;
        let mut fits = false;
        let mut total = 0.0f32;
        let mut remaining = nmodes;

        let mut mode = 0;
        while mode < nmodes {
            let mut weight = keep * w[mode] + prune;
            let mut swaps = 0;
            if !fits {
                let v = var[mode];
                let mut dist2 = 0.0f32;
                for c in 0..ch {
                    let d = mean[mode * stride + c] - x[c];
                    dist2 += d * d;
                }
                if total < prm.background_ratio && dist2 < prm.var_threshold * v {
                    background = true;
                }
                if dist2 < prm.var_threshold_gen * v {
                    fits = true;
                    weight += alpha;
                    let rate = alpha / weight;
                    for c in 0..ch {
                        let d = mean[mode * stride + c] - x[c];
                        mean[mode * stride + c] -= rate * d;
                    }
                    var[mode] = (v + rate * (dist2 - v)).clamp(prm.var_min, prm.var_max);
                    // bubble the grown mode towards the front
                    let mut i = mode;
                    while i > 0 && weight >= w[i - 1] {
                        w.swap(i, i - 1);
                        var.swap(i, i - 1);
                        for c in 0..stride {
                            mean.swap(i * stride + c, (i - 1) * stride + c);
                        }
                        swaps += 1;
                        i -= 1;
                    }
                }
            }
            if weight < -prune {
                weight = 0.0;
                remaining -= 1;
            }
            w[mode - swaps] = weight;
            total += weight;
            mode += 1;
        }

        if total > 0.0 {
            let inv = 1.0 / total;
            for wm in w.iter_mut().take(nmodes) {
                *wm *= inv;
            }
        }
        nmodes = remaining;

        if !fits && alpha > 0.0 {
            let slot = if nmodes == k { k - 1 } else { nmodes += 1; nmodes - 1 };
            if nmodes == 1 {
                w[slot] = 1.0;
            } else {
                w[slot] = alpha;
                for wm in w.iter_mut().take(nmodes - 1) {
                    *wm *= keep;
                }
            }
            for c in 0..ch {
                mean[slot * stride + c] = x[c];
            }
            var[slot] = prm.var_init;
            let mut i = nmodes - 1;
            while i > 0 && alpha >= w[i - 1] {
                w.swap(i, i - 1);
                var.swap(i, i - 1);
                for c in 0..stride {
                    mean.swap(i * stride + c, (i - 1) * stride + c);
                }
                i -= 1;
            }
        }
        self.modes_used[p] = nmodes as u8;

        if background {
            return Label::Background;
        }
        if prm.detect_shadows && self.is_shadow(p, x) {
            return Label::Shadow;
        }
        Label::Foreground
    }

    fn is_shadow(&self, p: usize, x: &[f32]) -> bool {
        let prm = &self.params;
        let k = prm.n_mixtures;
        let stride = self.channels;
        let nmodes = usize::from(self.modes_used[p]);
        let mut total = 0.0f32;
        for mode in 0..nmodes {
            let w = self.weight[p * k + mode];
            let v = self.variance[p * k + mode];
            let mean = &self.mean[(p * k + mode) * stride..(p * k + mode) * stride + x.len()];
            let num: f32 = mean.iter().zip(x).map(|(m, s)| m * s).sum();
            let den: f32 = mean.iter().map(|m| m * m).sum();
            if den == 0.0 {
                return false;
            }
            if num <= den && num >= prm.shadow_threshold * den {
                let a = num / den;
                let dist2a: f32 = mean.iter().zip(x).map(|(m, s)| (a * m - s) * (a * m - s)).sum();
                if dist2a < prm.var_threshold * v * a * a {
                    return true;
                }
            }
            total += w;
            if total > prm.background_ratio {
                break;
            }
        }
        false
    }
}

fn morph(mask: &Mask, want: u8) -> Mask {
    let (w, h) = mask.dims();
    Image::from_fn(w, h, 1, |x, y, _| {
        let mut hit = false;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                let v = if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    0
                } else {
                    mask.get(nx as usize, ny as usize, 0)
                };
                if v == want {
                    hit = true;
                }
            }
        }
        if hit { want } else { 1 - want }
    })
}

fn erode(mask: &Mask) -> Mask {
    morph(mask, 0)
}

fn dilate(mask: &Mask) -> Mask {
    morph(mask, 1)
}

/// Runs a fresh background model over `frames` (in order) and returns one
/// foreground mask per frame. `frame_indices` labels the masks.
pub fn gmm_subtract(frames: &[Image<u8>], frame_indices: &[u64], params: &GmmParams) -> Result<Vec<ForegroundMask>> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("no frames"));
    }
    if frame_indices.len() != frames.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} frame indices for {} frames",
            frame_indices.len(),
            frames.len()
        )));
    }
    let first = frames[0].dims();
    if let Some(bad) = frames.iter().position(|f| f.dims() != first || f.channels() != frames[0].channels()) {
        return Err(Error::DimensionMismatch(format!("frame {bad} differs from frame 0")));
    }
    let mut model = BackgroundSubtractor::new(params.clone())?;
    frames
        .iter()
        .zip(frame_indices)
        .map(|(f, &i)| {
            Ok(ForegroundMask {
                mask: model.apply(f)?,
                frame_index: i,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(v: u8) -> Image<u8> {
        Image::from_fn(16, 12, 3, |_, _, _| v)
    }

    #[test]
    fn single_frame_gives_one_mask() {
        let masks = gmm_subtract(&[flat(10)], &[7], &GmmParams::default()).unwrap();
        assert_eq!(masks.len(), 1);
        assert_eq!(masks[0].frame_index, 7);
        assert_eq!(masks[0].mask.dims(), (16, 12));
    }

    #[test]
    fn rejects_empty_and_mismatched_input() {
        assert!(gmm_subtract(&[], &[], &GmmParams::default()).is_err());
        let other = Image::from_fn(8, 12, 3, |_, _, _| 0u8);
        assert!(matches!(
            gmm_subtract(&[flat(1), other], &[0, 1], &GmmParams::default()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn sudden_bright_patch_is_foreground() {
        let mut frames: Vec<Image<u8>> = (0..30).map(|_| flat(40)).collect();
        let mut last = flat(40);
        for y in 4..8 {
            for x in 4..8 {
                for c in 0..3 {
                    last.set(x, y, c, 220);
                }
            }
        }
        frames.push(last);
        let idx: Vec<u64> = (0..frames.len() as u64).collect();
        let masks = gmm_subtract(&frames, &idx, &GmmParams::default()).unwrap();
        let m = &masks.last().unwrap().mask;
        assert_eq!(m.count_nonzero(), 16);
        assert_eq!(m.get(5, 5, 0), 1);
        assert_eq!(m.get(0, 0, 0), 0);
    }

    #[test]
    fn darkened_background_is_shadow_not_foreground() {
        let mut frames: Vec<Image<u8>> = (0..30).map(|_| flat(200)).collect();
        frames.push(flat(150));
        let idx: Vec<u64> = (0..frames.len() as u64).collect();
        let masks = gmm_subtract(&frames, &idx, &GmmParams::default()).unwrap();
        assert_eq!(masks.last().unwrap().mask.count_nonzero(), 0);

        let params = GmmParams {
            detect_shadows: false,
            ..GmmParams::default()
        };
        let masks = gmm_subtract(&frames, &idx, &params).unwrap();
        assert_eq!(masks.last().unwrap().mask.count_nonzero(), 16 * 12);
    }

    #[test]
    fn opening_removes_isolated_pixels() {
        let mut m = Image::new(9, 9, 1);
        m.set(4, 4, 0, 1);
        assert_eq!(dilate(&erode(&m)).count_nonzero(), 0);
        assert_eq!(erode(&dilate(&m)).count_nonzero(), 1);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let p = GmmParams {
            history: 0,
            ..GmmParams::default()
        };
        assert!(BackgroundSubtractor::new(p).is_err());
    }
}
