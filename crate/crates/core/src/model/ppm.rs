//! Patch pyramid mapping: multi-scale partitions of a feature map, each patch
//! pooled (average plus max) and sent through its own linear map.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::nn::{gemm, modules, taken, Param, Real, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PpmVariant {
    /// Horizontal strips first, split vertically once there are more patches
    /// than rows.
    Ppm,
    /// Plain `2^(u-1) x 2^(v-1)` grid.
    PpmV,
}

/// One rectangular region of the feature map.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Patch {
    /// Pyramid option `(u, v)`, both 1-based.
    pub option: (usize, usize),
    /// Position within the option, row-major.
    pub index: usize,
    pub rows: Range<usize>,
    pub cols: Range<usize>,
}

impl Patch {
    pub fn area(&self) -> usize {
        self.rows.len() * self.cols.len()
    }
}

fn grid(option: (usize, usize), h: usize, w: usize, nr: usize, nc: usize) -> Result<Vec<Patch>> {
    if nr == 0 || nc == 0 || h % nr != 0 || w % nc != 0 {
        return Err(Error::InvalidParameter(format!(
            "option {option:?}: a {h}x{w} map cannot be split into {nr}x{nc} equal patches"
        )));
    }
    let (ph, pw) = (h / nr, w / nc);
    Ok((0..nr * nc)
        .map(|i| Patch {
            option,
            index: i,
            rows: (i / nc) * ph..(i / nc + 1) * ph,
            cols: (i % nc) * pw..(i % nc + 1) * pw,
        })
        .collect())
}

/// Patches of every option `(u, v)` for `u in 1..=levels_u`, `v in
/// 1..=levels_v`, `u` outermost. Each option tiles the map exactly.
pub fn ppm_partition(h: usize, w: usize, levels_u: usize, levels_v: usize, variant: PpmVariant) -> Result<Vec<Patch>> {
    let mut out = Vec::new();
    for u in 1..=levels_u {
        for v in 1..=levels_v {
            let (a, b) = (1usize << (u - 1), 1usize << (v - 1));
            let patches = match variant {
                PpmVariant::PpmV => grid((u, v), h, w, a, b)?,
                PpmVariant::Ppm => {
                    let count = a * b;
                    if count > h * w {
                        return Err(Error::InvalidParameter(format!(
                            "option ({u}, {v}) needs {count} patches but the map has {} cells",
                            h * w
                        )));
                    }
                    if count <= h {
                        grid((u, v), h, w, count, 1)?
                    } else {
                        if count % h != 0 {
                            return Err(Error::InvalidParameter(format!("{count} patches do not divide into {h} rows")));
                        }
                        grid((u, v), h, w, h, count / h)?
                    }
                }
            };
            out.extend(patches);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
struct Cache<T> {
    shape: [usize; 4],
    pooled: Vec<T>,
    argmax: Vec<u32>,
}

/// Pooling plus one bias-free `c -> d` map per patch.
#[derive(Debug, Clone)]
pub struct Ppm<T> {
    pub patches: Vec<Patch>,
    /// `[patches, d, c]`.
    pub maps: Param<T>,
    pub channels: usize,
    pub dim: usize,
    cache: Option<Cache<T>>,
}

modules!(Ppm { maps });

impl<T: Real> Ppm<T> {
    pub fn new(patches: Vec<Patch>, channels: usize, dim: usize) -> Self {
        let p = patches.len();
        Self {
            patches,
            maps: Param::new(&[p, dim, channels], T::zero()),
            channels,
            dim,
            cache: None,
        }
    }

    /// Average plus max over each patch: `[n, patches, c]` and the flat argmax
    /// cell of each maximum.
    pub fn pool(&self, x: &Tensor<T>) -> (Vec<T>, Vec<u32>) {
        let [n, c, h, w] = x.shape();
        assert_eq!(c, self.channels, "ppm channels");
        let p = self.patches.len();
        let mut pooled = vec![T::zero(); n * p * c];
        let mut argmax = vec![0u32; n * p * c];
        for b in 0..n {
            for (pi, patch) in self.patches.iter().enumerate() {
                assert!(patch.rows.end <= h && patch.cols.end <= w, "patch outside map");
                let inv_area = T::one() / T::lit(patch.area() as f64);
                for ch in 0..c {
                    let plane = &x.data()[(b * c + ch) * h * w..][..h * w];
                    let (mut sum, mut best, mut arg) = (T::zero(), T::neg_infinity(), 0);
                    for r in patch.rows.clone() {
                        for col in patch.cols.clone() {
                            let v = plane[r * w + col];
                            sum += v;
                            if v > best {
                                best = v;
                                arg = r * w + col;
                            }
                        }
                    }
                    let o = (b * p + pi) * c + ch;
                    pooled[o] = sum * inv_area + best;
                    argmax[o] = arg as u32;
                }
            }
        }
        (pooled, argmax)
    }

    fn map(&self, pooled: &[T], n: usize) -> Tensor<T> {
        let (p, c, d) = (self.patches.len(), self.channels, self.dim);
        let mut y = Tensor::zeros([n, p * d, 1, 1]);
        for b in 0..n {
            for pi in 0..p {
                let m = &self.maps.value[pi * d * c..][..d * c];
                let src = &pooled[(b * p + pi) * c..][..c];
                let dst = &mut y.data_mut()[(b * p + pi) * d..][..d];
                gemm(d, c, 1, m, false, src, false, T::zero(), dst);
            }
        }
        y
    }

    /// `[n, patches * d, 1, 1]`, patch-major.
    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let (pooled, _) = self.pool(x);
        self.map(&pooled, x.n())
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let (pooled, argmax) = self.pool(x);
        let y = self.map(&pooled, x.n());
        self.cache = Some(Cache {
            shape: x.shape(),
            pooled,
            argmax,
        });
        y
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Tensor<T> {
        let Cache { shape, pooled, argmax } = taken(&mut self.cache, "ppm");
        let [n, c, h, w] = shape;
        let (p, d) = (self.patches.len(), self.dim);
        let mut dx = Tensor::zeros(shape);
        let mut dpooled = vec![T::zero(); c];
        for b in 0..n {
            for (pi, patch) in self.patches.iter().enumerate() {
                let g = &dy.data()[(b * p + pi) * d..][..d];
                let src = &pooled[(b * p + pi) * c..][..c];
                gemm(d, 1, c, g, false, src, false, T::one(), &mut self.maps.grad[pi * d * c..][..d * c]);
                gemm(c, d, 1, &self.maps.value[pi * d * c..][..d * c], true, g, false, T::zero(), &mut dpooled);
                let inv_area = T::one() / T::lit(patch.area() as f64);
                for ch in 0..c {
                    let plane = &mut dx.data_mut()[(b * c + ch) * h * w..][..h * w];
                    let avg = dpooled[ch] * inv_area;
                    for r in patch.rows.clone() {
                        for col in patch.cols.clone() {
                            plane[r * w + col] += avg;
                        }
                    }
                    plane[argmax[(b * p + pi) * c + ch] as usize] += dpooled[ch];
                }
            }
        }
        dx
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
