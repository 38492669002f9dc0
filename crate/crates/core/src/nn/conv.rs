use alloc::vec;

use super::{gemm, modules, taken, Param, Real, Tensor};

/// Square-kernel 2-D convolution, lowered to one matrix product per frame.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    input: Option<Tensor<T>>,
}

modules!(Conv2d { weight, bias });

struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
}

impl<T: Real> Conv2d<T> {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize, bias: bool) -> Self {
        Self {
            weight: Param::new(&[out_channels, in_channels, kernel, kernel], T::zero()),
            bias: bias.then(|| Param::new(&[out_channels], T::zero())),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            input: None,
        }
    }

    pub fn output_size(&self, size: usize) -> usize {
        (size + 2 * self.padding - self.kernel) / self.stride + 1
    }

    fn geometry(&self, x: &Tensor<T>) -> Geometry {
        let [_, c, h, w] = x.shape();
        assert_eq!(c, self.in_channels, "conv input channels");
        assert!(h + 2 * self.padding >= self.kernel && w + 2 * self.padding >= self.kernel, "conv input too small");
        Geometry {
            c,
            h,
            w,
            oh: self.output_size(h),
            ow: self.output_size(w),
        }
    }

    fn im2col(&self, x: &[T], g: &Geometry, col: &mut [T]) {
        let (k, s, p) = (self.kernel, self.stride, self.padding as isize);
        let plane = g.oh * g.ow;
        for ci in 0..g.c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let dst = &mut col[row * plane..(row + 1) * plane];
                    for oy in 0..g.oh {
                        let iy = (oy * s + ky) as isize - p;
                        let out = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                        if iy < 0 || iy >= g.h as isize {
                            out.iter_mut().for_each(|v| *v = T::zero());
                            continue;
                        }
                        let src = &x[(ci * g.h + iy as usize) * g.w..][..g.w];
                        for (ox, v) in out.iter_mut().enumerate() {
                            let ix = (ox * s + kx) as isize - p;
                            *v = if ix >= 0 && ix < g.w as isize { src[ix as usize] } else { T::zero() };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, col: &[T], g: &Geometry, dx: &mut [T]) {
        let (k, s, p) = (self.kernel, self.stride, self.padding as isize);
        let plane = g.oh * g.ow;
        for ci in 0..g.c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let src = &col[row * plane..(row + 1) * plane];
                    for oy in 0..g.oh {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let dst = &mut dx[(ci * g.h + iy as usize) * g.w..][..g.w];
                        for ox in 0..g.ow {
                            let ix = (ox * s + kx) as isize - p;
                            if ix >= 0 && ix < g.w as isize {
                                dst[ix as usize] += src[oy * g.ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let g = self.geometry(x);
        let kk = g.c * self.kernel * self.kernel;
        let plane = g.oh * g.ow;
        let mut col = vec![T::zero(); kk * plane];
        let mut y = Tensor::zeros([x.n(), self.out_channels, g.oh, g.ow]);
        for i in 0..x.n() {
            self.im2col(x.item(i), &g, &mut col);
            let out = y.item_mut(i);
            gemm(self.out_channels, kk, plane, &self.weight.value, false, &col, false, T::zero(), out);
            if let Some(b) = &self.bias {
                for (o, &bv) in out.chunks_mut(plane).zip(&b.value) {
                    o.iter_mut().for_each(|v| *v += bv);
                }
            }
        }
        y
    }

    pub fn forward_train(&mut self, x: Tensor<T>) -> Tensor<T> {
        let y = self.forward(&x);
        self.input = Some(x);
        y
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, dy: &Tensor<T>) -> Tensor<T> {
        let x = taken(&mut self.input, "conv");
        let g = self.geometry(&x);
        let kk = g.c * self.kernel * self.kernel;
        let plane = g.oh * g.ow;
        let mut col = vec![T::zero(); kk * plane];
        let mut dcol = vec![T::zero(); kk * plane];
        let mut dx = Tensor::zeros(x.shape());
        for i in 0..x.n() {
            let dyi = dy.item(i);
            self.im2col(x.item(i), &g, &mut col);
            gemm(self.out_channels, plane, kk, dyi, false, &col, true, T::one(), &mut self.weight.grad);
            if let Some(b) = &mut self.bias {
                for (gb, d) in b.grad.iter_mut().zip(dyi.chunks(plane)) {
                    *gb += d.iter().copied().sum::<T>();
                }
            }
            gemm(kk, self.out_channels, plane, &self.weight.value, true, dyi, false, T::zero(), &mut dcol);
            self.col2im(&dcol, &g, dx.item_mut(i));
        }
        dx
    }

    pub fn clear_cache(&mut self) {
        self.input = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    /// Direct nested-loop convolution.
    fn naive(conv: &Conv2d<f64>, x: &Tensor<f64>) -> Vec<f64> {
        let [n, c, h, w] = x.shape();
        let (k, s, p) = (conv.kernel, conv.stride, conv.padding as isize);
        let (oh, ow) = (conv.output_size(h), conv.output_size(w));
        let mut out = Vec::new();
        for b in 0..n {
            for o in 0..conv.out_channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = conv.bias.as_ref().map_or(0.0, |b| b.value[o]);
                        for ci in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * s + ky) as isize - p;
                                    let ix = (ox * s + kx) as isize - p;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                        acc += conv.weight.value[((o * c + ci) * k + ky) * k + kx]
                                            * x.data()[((b * c + ci) * h + iy as usize) * w + ix as usize];
                                    }
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
        out
    }

    fn setup() -> (Conv2d<f64>, Tensor<f64>) {
        let mut conv = Conv2d::new(2, 3, 3, 2, 1, true);
        for (i, w) in conv.weight.value.iter_mut().enumerate() {
            *w = ((i * 7 % 11) as f64 - 5.0) / 10.0;
        }
        conv.bias.as_mut().unwrap().value = vec![0.1, -0.2, 0.3];
        let x = Tensor::from_vec([2, 2, 5, 6], (0..120).map(|v| ((v * 13 % 17) as f64) / 17.0).collect()).unwrap();
        (conv, x)
    }

    #[test]
    fn matches_direct_convolution() {
        let (conv, x) = setup();
        let y = conv.forward(&x);
        assert_eq!(y.shape(), [2, 3, 3, 3]);
        for (a, b) in y.data().iter().zip(naive(&conv, &x)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_is_the_adjoint() {
        // <dy, conv(x)> is linear in x and w, so its gradients are exact
        let (mut conv, x) = setup();
        let dy = Tensor::from_vec([2, 3, 3, 3], (0..54).map(|v| (v as f64 * 0.37).cos()).collect()).unwrap();
        let f = |c: &Conv2d<f64>, x: &Tensor<f64>| -> f64 { c.forward(x).data().iter().zip(dy.data()).map(|(a, b)| a * b).sum() };
        conv.forward_train(x.clone());
        let dx = conv.backward(&dy);
        let h = 1e-6;
        for i in [0, 7, 31, 59, 119] {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let num = (f(&conv, &xp) - f(&conv, &x)) / h;
            assert!((num - dx.data()[i]).abs() < 1e-6, "dx[{i}]");
        }
        for i in [0, 5, 20, 53] {
            let mut cp = conv.clone();
            cp.weight.value[i] += h;
            let num = (f(&cp, &x) - f(&conv, &x)) / h;
            assert!((num - conv.weight.grad[i]).abs() < 1e-6, "dw[{i}]");
        }
        let db: f64 = dy.data()[..9].iter().chain(&dy.data()[27..36]).sum();
        assert!((conv.bias.as_ref().unwrap().grad[0] - db).abs() < 1e-12);
    }
}
