//! Affine grid sampling. Output pixel centers are mapped to normalised
//! coordinates in `[-1, 1]`, transformed by a per-item 2x3 matrix and read
//! back from the input with bilinear interpolation and zero padding.
//! Coordinates are computed in `f64` regardless of the tensor type.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use super::{taken, Real, Tensor};

struct Tap {
    x0: isize,
    y0: isize,
    fx: f64,
    fy: f64,
    xt: f64,
    yt: f64,
}

fn taps(theta: &[f64], h: usize, w: usize) -> impl Iterator<Item = Tap> + '_ {
    (0..h).flat_map(move |i| {
        (0..w).map(move |j| {
            let xt = (2 * j + 1) as f64 / w as f64 - 1.0;
            let yt = (2 * i + 1) as f64 / h as f64 - 1.0;
            let xs = theta[0] * xt + theta[1] * yt + theta[2];
            let ys = theta[3] * xt + theta[4] * yt + theta[5];
            let ix = ((xs + 1.0) * w as f64 - 1.0) / 2.0;
            let iy = ((ys + 1.0) * h as f64 - 1.0) / 2.0;
            let (x0, y0) = (Float::floor(ix), Float::floor(iy));
            Tap {
                x0: x0 as isize,
                y0: y0 as isize,
                fx: ix - x0,
                fy: iy - y0,
                xt,
                yt,
            }
        })
    })
}

fn theta_f64<T: Real>(theta: &[T]) -> Vec<f64> {
    theta.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect()
}

#[inline]
fn corner<T: Real>(plane: &[T], h: usize, w: usize, x: isize, y: isize) -> T {
    if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
        plane[y as usize * w + x as usize]
    } else {
        T::zero()
    }
}

/// Warps each item of `x` by its 6 entries of `theta` (row-major 2x3).
pub fn warp<T: Real>(x: &Tensor<T>, theta: &[T]) -> Tensor<T> {
    let [n, c, h, w] = x.shape();
    assert_eq!(theta.len(), 6 * n, "one affine matrix per item");
    let mut y = Tensor::zeros(x.shape());
    for b in 0..n {
        let th = theta_f64(&theta[6 * b..6 * b + 6]);
        for (p, t) in taps(&th, h, w).enumerate() {
            let (wx1, wy1) = (T::lit(t.fx), T::lit(t.fy));
            let (wx0, wy0) = (T::one() - wx1, T::one() - wy1);
            for ch in 0..c {
                let plane = &x.data()[(b * c + ch) * h * w..][..h * w];
                let v = wy0 * (wx0 * corner(plane, h, w, t.x0, t.y0) + wx1 * corner(plane, h, w, t.x0 + 1, t.y0))
                    + wy1 * (wx0 * corner(plane, h, w, t.x0, t.y0 + 1) + wx1 * corner(plane, h, w, t.x0 + 1, t.y0 + 1));
                y.data_mut()[(b * c + ch) * h * w + p] = v;
            }
        }
    }
    y
}

/// Gradients of [`warp`] with respect to its input and to `theta`.
pub fn warp_backward<T: Real>(x: &Tensor<T>, theta: &[T], dy: &Tensor<T>) -> (Tensor<T>, Vec<T>) {
    let [n, c, h, w] = x.shape();
    let mut dx = Tensor::zeros(x.shape());
    let mut dtheta = vec![T::zero(); 6 * n];
    let (half_w, half_h) = (T::lit(w as f64 / 2.0), T::lit(h as f64 / 2.0));
    for b in 0..n {
        let th = theta_f64(&theta[6 * b..6 * b + 6]);
        let dth = &mut dtheta[6 * b..6 * b + 6];
        for (p, t) in taps(&th, h, w).enumerate() {
            let (wx1, wy1) = (T::lit(t.fx), T::lit(t.fy));
            let (wx0, wy0) = (T::one() - wx1, T::one() - wy1);
            let (mut gix, mut giy) = (T::zero(), T::zero());
            for ch in 0..c {
                let off = (b * c + ch) * h * w;
                let g = dy.data()[off + p];
                let plane = &x.data()[off..off + h * w];
                let v00 = corner(plane, h, w, t.x0, t.y0);
                let v10 = corner(plane, h, w, t.x0 + 1, t.y0);
                let v01 = corner(plane, h, w, t.x0, t.y0 + 1);
                let v11 = corner(plane, h, w, t.x0 + 1, t.y0 + 1);
                gix += g * (wy0 * (v10 - v00) + wy1 * (v11 - v01));
                giy += g * (wx0 * (v01 - v00) + wx1 * (v11 - v10));
                let dplane = &mut dx.data_mut()[off..off + h * w];
                for (dxo, dyo, wgt) in [(0, 0, wx0 * wy0), (1, 0, wx1 * wy0), (0, 1, wx0 * wy1), (1, 1, wx1 * wy1)] {
                    let (xx, yy) = (t.x0 + dxo, t.y0 + dyo);
                    if xx >= 0 && yy >= 0 && (xx as usize) < w && (yy as usize) < h {
                        dplane[yy as usize * w + xx as usize] += wgt * g;
                    }
                }
            }
            let (gxs, gys) = (gix * half_w, giy * half_h);
            let (xt, yt) = (T::lit(t.xt), T::lit(t.yt));
            dth[0] += gxs * xt;
            dth[1] += gxs * yt;
            dth[2] += gxs;
            dth[3] += gys * xt;
            dth[4] += gys * yt;
            dth[5] += gys;
        }
    }
    (dx, dtheta)
}

/// Caching wrapper around [`warp`] for training.
#[derive(Debug, Clone, Default)]
pub struct Warp<T> {
    cache: Option<(Tensor<T>, Vec<T>)>,
}

impl<T: Real> Warp<T> {
    pub fn new() -> Self {
        Self { cache: None }
    }

    pub fn forward_train(&mut self, x: Tensor<T>, theta: Vec<T>) -> Tensor<T> {
        let y = warp(&x, &theta);
        self.cache = Some((x, theta));
        y
    }

    /// Returns `(d input, d theta)`.
    pub fn backward(&mut self, dy: &Tensor<T>) -> (Tensor<T>, Vec<T>) {
        let (x, theta) = taken(&mut self.cache, "warp");
        warp_backward(&x, &theta, dy)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
