//! The recognition network: optional per-frame alignment, a residual
//! backbone, temporal max pooling to one map per set of frames, and patch
//! pyramid mapping to the final embedding.

mod backbone;
mod config;
mod localizer;
mod ppm;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

pub use backbone::{Backbone, BasicBlock, Projection};
pub use config::ModelConfig;
pub use localizer::{Localizer, IDENTITY_AFFINE};
pub use ppm::{ppm_partition, Patch, Ppm, PpmVariant};

use crate::image::{resize_bilinear_aligned, Mask};
use crate::nn::{modules, taken, warp, Real, Tensor, Warp};
use crate::{Error, Result};

/// Row-major 2x3 affine matrix mapping output to input coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams<T> {
    pub theta: [T; 6],
}

/// Per-patch vectors of one set of frames, in partition order.
#[derive(Debug, Clone, PartialEq)]
pub struct SubFeatureSet<T> {
    pub vectors: Vec<Vec<T>>,
    pub layout: Vec<Patch>,
}

impl<T: Copy> SubFeatureSet<T> {
    pub fn concatenate(&self) -> Vec<T> {
        self.vectors.iter().flatten().copied().collect()
    }
}

/// Elementwise maximum over the leading (frame) dimension. Ties keep the
/// earliest frame.
pub fn temporal_pool<T: Real>(maps: &Tensor<T>) -> Result<Tensor<T>> {
    if maps.n() == 0 {
        return Err(Error::EmptyInput("temporal pool"));
    }
    Ok(pool_clips(maps, &[maps.n()]).0)
}

/// Pools consecutive runs of `lens` frames. Returns the pooled maps and the
/// winning frame (relative to its clip) per output element.
fn pool_clips<T: Real>(maps: &Tensor<T>, lens: &[usize]) -> (Tensor<T>, Vec<u32>) {
    let [_, c, h, w] = maps.shape();
    let len = c * h * w;
    let mut out = Tensor::zeros([lens.len(), c, h, w]);
    let mut arg = vec![0u32; lens.len() * len];
    let mut start = 0;
    for (b, &n) in lens.iter().enumerate() {
        let dst = out.item_mut(b);
        dst.copy_from_slice(maps.item(start));
        let a = &mut arg[b * len..(b + 1) * len];
        for f in 1..n {
            for ((d, ai), &v) in dst.iter_mut().zip(a.iter_mut()).zip(maps.item(start + f)) {
                if v > *d {
                    *d = v;
                    *ai = f as u32;
                }
            }
        }
        start += n;
    }
    (out, arg)
}

/// Resizes a 0/1 silhouette to the square network input.
pub fn frame_input<T: Real>(mask: &Mask, size: usize) -> Vec<T> {
    let (w, h) = mask.dims();
    let plane: Vec<f64> = mask.data().iter().map(|&v| f64::from(u8::from(v != 0))).collect();
    if (w, h) == (size, size) {
        return plane.into_iter().map(T::lit).collect();
    }
    resize_bilinear_aligned(&plane, w, h, size, size).into_iter().map(T::lit).collect()
}

/// Stacks silhouettes into a `[frames, 1, size, size]` input.
pub fn sequence_input<'a, T: Real>(frames: impl IntoIterator<Item = &'a Mask>, size: usize) -> Tensor<T> {
    let mut data = Vec::new();
    let mut n = 0;
    for f in frames {
        data.extend(frame_input::<T>(f, size));
        n += 1;
    }
    Tensor::from_vec([n, 1, size, size], data).expect("square frames")
}

#[derive(Debug, Clone)]
struct TrainCache {
    lens: Vec<usize>,
    frame_shape: [usize; 4],
    argmax: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct GaitNet<T> {
    pub config: ModelConfig,
    pub localizer: Option<Localizer<T>>,
    pub backbone: Backbone<T>,
    pub ppm: Ppm<T>,
    warp: Warp<T>,
    cache: Option<TrainCache>,
}

modules!(GaitNet { localizer, backbone, ppm });

impl<T: Real> GaitNet<T> {
    /// Builds an untrained network with zero weights; see
    /// `training::initialize` for the learned-weight initialisation.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let s = config.feature_size();
        let patches = ppm_partition(s, s, config.pyramid_u, config.pyramid_v, config.ppm_variant)?;
        Ok(Self {
            localizer: config.use_alignment.then(|| Localizer::new(&config)),
            backbone: Backbone::new(&config),
            ppm: Ppm::new(patches, config.feature_channels(), config.embed_dim),
            config,
            warp: Warp::new(),
            cache: None,
        })
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let [n, c, h, w] = x.shape();
        let s = self.config.input_size;
        if n == 0 {
            return Err(Error::EmptyInput("frames"));
        }
        if (c, h, w) != (1, s, s) {
            return Err(Error::DimensionMismatch(format!("expected frames of 1x{s}x{s}, got {c}x{h}x{w}")));
        }
        Ok(())
    }

    /// Affine matrices per frame; identity when alignment is disabled.
    pub fn localize(&self, frames: &Tensor<T>) -> Result<Vec<AffineParams<T>>> {
        self.check_input(frames)?;
        let flat = match &self.localizer {
            Some(l) => l.forward(frames),
            None => IDENTITY_AFFINE.iter().cycle().take(6 * frames.n()).map(|&v| T::lit(v)).collect(),
        };
        Ok(flat
            .chunks(6)
            .map(|c| AffineParams {
                theta: [c[0], c[1], c[2], c[3], c[4], c[5]],
            })
            .collect())
    }

    /// Backbone map of each frame, computed one frame at a time with running
    /// normalisation statistics.
    pub fn frame_features(&self, frames: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(frames)?;
        let mut maps = Vec::with_capacity(frames.n());
        for i in 0..frames.n() {
            let x = Tensor::from_vec([1, 1, self.config.input_size, self.config.input_size], frames.item(i).to_vec())?;
            let x = match &self.localizer {
                Some(l) => warp(&x, &l.forward(&x)),
                None => x,
            };
            maps.push(self.backbone.forward(&x));
        }
        Ok(Tensor::stack(&maps))
    }

    pub fn sub_features(&self, frames: &Tensor<T>) -> Result<SubFeatureSet<T>> {
        let pooled = temporal_pool(&self.frame_features(frames)?)?;
        let flat = self.ppm.forward(&pooled).into_vec();
        Ok(SubFeatureSet {
            vectors: flat.chunks(self.config.embed_dim).map(<[T]>::to_vec).collect(),
            layout: self.ppm.patches.clone(),
        })
    }

    /// Embedding of one set of frames, `patches * embed_dim` long.
    pub fn embed(&self, frames: &Tensor<T>) -> Result<Vec<T>> {
        let pooled = temporal_pool(&self.frame_features(frames)?)?;
        Ok(self.ppm.forward(&pooled).into_vec())
    }

    /// Training forward over several clips stored back to back in `frames`.
    /// Normalisation uses batch statistics across all frames. Returns
    /// `[clips, patches * embed_dim, 1, 1]`.
    pub fn forward_train(&mut self, frames: Tensor<T>, lens: &[usize]) -> Result<Tensor<T>> {
        self.check_input(&frames)?;
        if lens.iter().sum::<usize>() != frames.n() || lens.contains(&0) {
            return Err(Error::DimensionMismatch(format!("clip lengths {lens:?} for {} frames", frames.n())));
        }
        let x = match &mut self.localizer {
            Some(l) => {
                let theta = l.forward_train(frames.clone());
                self.warp.forward_train(frames, theta)
            }
            None => frames,
        };
        let maps = self.backbone.forward_train(x);
        let frame_shape = maps.shape();
        let (pooled, argmax) = pool_clips(&maps, lens);
        let out = self.ppm.forward_train(&pooled);
        self.cache = Some(TrainCache {
            lens: lens.to_vec(),
            frame_shape,
            argmax,
        });
        Ok(out)
    }

    /// Accumulates gradients for the output of the last `forward_train`.
    pub fn backward(&mut self, dout: &Tensor<T>) {
        let TrainCache { lens, frame_shape, argmax } = taken(&mut self.cache, "network");
        let dpooled = self.ppm.backward(dout);
        let len = dpooled.item_len();
        let mut dmaps = Tensor::zeros(frame_shape);
        let mut start = 0;
        for (b, &n) in lens.iter().enumerate() {
            let g = dpooled.item(b);
            let a = &argmax[b * len..(b + 1) * len];
            for (e, (&gv, &f)) in g.iter().zip(a).enumerate() {
                debug_assert!((f as usize) < n);
                dmaps.item_mut(start + f as usize)[e] += gv;
            }
            start += n;
        }
        let dx = self.backbone.backward(dmaps);
        if let Some(l) = &mut self.localizer {
            let (_, dtheta) = self.warp.backward(&dx);
            l.backward(dtheta);
        }
    }
}
