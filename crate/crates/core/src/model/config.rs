use alloc::format;

use num_traits::Float;

use super::ppm::{ppm_partition, PpmVariant};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelConfig {
    /// Side of the square network input (256, or 64 for the low-resolution
    /// setting).
    pub input_size: usize,
    pub use_alignment: bool,
    /// Stride of the first convolution of residual stages 2 and 3.
    pub block23_stride: usize,
    /// Number of pyramid levels along height and width.
    pub pyramid_u: usize,
    pub pyramid_v: usize,
    /// Output dimension of each patch map.
    pub embed_dim: usize,
    pub ppm_variant: PpmVariant,
    /// Multiplier on every convolution width.
    pub channel_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_size: 256,
            use_alignment: true,
            block23_stride: 2,
            pyramid_u: 4,
            pyramid_v: 4,
            embed_dim: 256,
            ppm_variant: PpmVariant::Ppm,
            channel_scale: 1.0,
        }
    }
}

pub(crate) const STEM_WIDTH: usize = 64;
pub(crate) const STAGE_WIDTHS: [usize; 3] = [64, 128, 256];
pub(crate) const LOCALIZER_WIDTHS: [usize; 2] = [16, 32];
pub(crate) const LOCALIZER_HIDDEN: [usize; 3] = [512, 128, 32];

impl ModelConfig {
    /// 64-pixel input without alignment and with stride-1 later stages.
    pub fn low_resolution() -> Self {
        Self {
            input_size: 64,
            use_alignment: false,
            block23_stride: 1,
            ..Self::default()
        }
    }

    pub fn width(&self, base: usize) -> usize {
        (Float::round(base as f64 * self.channel_scale) as usize).max(1)
    }

    pub fn feature_channels(&self) -> usize {
        self.width(STAGE_WIDTHS[2])
    }

    /// Side of the backbone output map.
    pub fn feature_size(&self) -> usize {
        let conv = |s: usize, k: usize, stride: usize, pad: usize| (s + 2 * pad).saturating_sub(k) / stride + 1;
        let mut s = conv(self.input_size, 7, 2, 3);
        s = conv(s, 3, 2, 1);
        for _ in 0..2 {
            s = conv(s, 3, self.block23_stride, 1);
        }
        s
    }

    /// Spatial size after each localizer stage, ending with the flattened
    /// width fed to the first fully connected layer.
    pub fn localizer_trace(&self) -> [usize; 5] {
        let conv = |s: usize| (s + 2).saturating_sub(7) / 2 + 1;
        let a = conv(self.input_size);
        let b = a / 2;
        let c = conv(b);
        let d = c / 2;
        [a, b, c, d, d * d * self.width(LOCALIZER_WIDTHS[1])]
    }

    pub fn patch_count(&self) -> usize {
        ((1usize << self.pyramid_u) - 1) * ((1usize << self.pyramid_v) - 1)
    }

    pub fn embedding_len(&self) -> usize {
        self.patch_count() * self.embed_dim
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::InvalidParameter(m));
        if self.input_size < 16 {
            return bad(format!("input size {} is too small", self.input_size));
        }
        if self.input_size == 64 && (self.use_alignment || self.block23_stride != 1) {
            return bad("64-pixel input requires use_alignment = false and block23_stride = 1".into());
        }
        if !matches!(self.block23_stride, 1 | 2) {
            return bad(format!("block23_stride must be 1 or 2, got {}", self.block23_stride));
        }
        if !(1..=8).contains(&self.pyramid_u) || !(1..=8).contains(&self.pyramid_v) {
            return bad("pyramid levels must be in 1..=8".into());
        }
        if self.embed_dim == 0 {
            return bad("embed_dim must be positive".into());
        }
        if !(self.channel_scale > 0.0 && self.channel_scale.is_finite()) {
            return bad(format!("channel_scale must be positive, got {}", self.channel_scale));
        }
        if self.use_alignment && self.localizer_trace()[3] == 0 {
            return bad(format!("input size {} is too small for the localizer", self.input_size));
        }
        let s = self.feature_size();
        ppm_partition(s, s, self.pyramid_u, self.pyramid_v, self.ppm_variant).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn traces() {
        let c = ModelConfig::default();
        assert_eq!(c.localizer_trace(), [126, 63, 30, 15, 7200]);
        assert_eq!(c.feature_size(), 16);
        assert_eq!(c.feature_channels(), 256);
        assert_eq!(c.patch_count(), 225);
        assert_eq!(c.embedding_len(), 57_600);
        assert!(c.validate().is_ok());
        let g = ModelConfig::low_resolution();
        assert_eq!(g.feature_size(), 16);
        assert!(g.validate().is_ok());
    }

    #[test]
    fn low_resolution_constraints() {
        let bad = ModelConfig {
            use_alignment: true,
            ..ModelConfig::low_resolution()
        };
        assert!(bad.validate().is_err());
        let bad = ModelConfig {
            block23_stride: 2,
            ..ModelConfig::low_resolution()
        };
        assert!(bad.validate().is_err());
    }
}
