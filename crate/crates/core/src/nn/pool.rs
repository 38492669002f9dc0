use alloc::vec::Vec;

use super::{taken, Real, Tensor};

/// Rectifier with a cached activity mask.
#[derive(Debug, Clone, Default)]
pub struct Relu {
    active: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
        let mut y = x.clone();
        y.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
        y
    }

    pub fn forward_train<T: Real>(&mut self, mut x: Tensor<T>) -> Tensor<T> {
        let mut active = Vec::with_capacity(x.data().len());
        for v in x.data_mut() {
            let on = *v > T::zero();
            active.push(on);
            if !on {
                *v = T::zero();
            }
        }
        self.active = Some(active);
        x
    }

    pub fn backward<T: Real>(&mut self, mut dy: Tensor<T>) -> Tensor<T> {
        let active = taken(&mut self.active, "relu");
        for (d, on) in dy.data_mut().iter_mut().zip(active) {
            if !on {
                *d = T::zero();
            }
        }
        dy
    }

    pub fn clear_cache(&mut self) {
        self.active = None;
    }
}

/// Max pooling with implicit negative-infinity padding. Ties go to the first
/// window position in row-major order.
#[derive(Debug, Clone)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    cache: Option<([usize; 4], Vec<u32>)>,
}

impl MaxPool2d {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            kernel,
            stride,
            padding,
            cache: None,
        }
    }

    pub fn output_size(&self, size: usize) -> usize {
        (size + 2 * self.padding - self.kernel) / self.stride + 1
    }

    fn run<T: Real>(&self, x: &Tensor<T>, mut record: Option<&mut Vec<u32>>) -> Tensor<T> {
        let [n, c, h, w] = x.shape();
        let (oh, ow) = (self.output_size(h), self.output_size(w));
        let mut y = Tensor::zeros([n, c, oh, ow]);
        let p = self.padding as isize;
        let mut o = 0;
        for plane in 0..n * c {
            let src = &x.data()[plane * h * w..][..h * w];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = T::neg_infinity();
                    let mut arg = 0usize;
                    for ky in 0..self.kernel {
                        let iy = (oy * self.stride + ky) as isize - p;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..self.kernel {
                            let ix = (ox * self.stride + kx) as isize - p;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let i = iy as usize * w + ix as usize;
                            if src[i] > best {
                                best = src[i];
                                arg = i;
                            }
                        }
                    }
                    y.data_mut()[o] = best;
                    if let Some(r) = record.as_deref_mut() {
                        r.push(arg as u32);
                    }
                    o += 1;
                }
            }
        }
        y
    }

    pub fn forward<T: Real>(&self, x: &Tensor<T>) -> Tensor<T> {
        self.run(x, None)
    }

    pub fn forward_train<T: Real>(&mut self, x: Tensor<T>) -> Tensor<T> {
        let mut arg = Vec::new();
        let y = self.run(&x, Some(&mut arg));
        self.cache = Some((x.shape(), arg));
        y
    }

    pub fn backward<T: Real>(&mut self, dy: &Tensor<T>) -> Tensor<T> {
        let (shape, arg) = taken(&mut self.cache, "max pool");
        let [n, c, h, w] = shape;
        let mut dx = Tensor::zeros(shape);
        let per_plane = dy.shape()[2] * dy.shape()[3];
        for plane in 0..n * c {
            let dst = &mut dx.data_mut()[plane * h * w..][..h * w];
            for j in 0..per_plane {
                let o = plane * per_plane + j;
                dst[arg[o] as usize] += dy.data()[o];
            }
        }
        dx
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
