use alloc::vec;
use alloc::vec::Vec;

use super::{modules, taken, Param, Real, Tensor};

/// Per-channel batch normalisation. Training uses batch statistics and
/// updates the running estimates; inference uses the running estimates.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Param<T>,
    pub running_var: Param<T>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<Cache<T>>,
}

modules!(BatchNorm2d { gamma, beta, running_mean, running_var });

#[derive(Debug, Clone)]
struct Cache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
}

impl<T: Real> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(&[channels], T::one()),
            beta: Param::new(&[channels], T::zero()),
            running_mean: Param::buffer(&[channels], T::zero()),
            running_var: Param::buffer(&[channels], T::one()),
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let [n, c, h, w] = x.shape();
        assert_eq!(c, self.channels(), "batch norm channels");
        let plane = h * w;
        let mut y = x.clone();
        for ch in 0..c {
            let inv = T::one() / (self.running_var.value[ch] + T::lit(self.eps)).sqrt();
            let scale = self.gamma.value[ch] * inv;
            let shift = self.beta.value[ch] - self.running_mean.value[ch] * scale;
            for b in 0..n {
                for v in &mut y.data_mut()[(b * c + ch) * plane..][..plane] {
                    *v = *v * scale + shift;
                }
            }
        }
        y
    }

    pub fn forward_train(&mut self, x: Tensor<T>) -> Tensor<T> {
        let [n, c, h, w] = x.shape();
        assert_eq!(c, self.channels(), "batch norm channels");
        let plane = h * w;
        let count = n * plane;
        let mut xhat = x;
        let mut inv_std = vec![T::zero(); c];
        for ch in 0..c {
            let mut sum = T::zero();
            for b in 0..n {
                sum += xhat.data()[(b * c + ch) * plane..][..plane].iter().copied().sum::<T>();
            }
            let mean = sum / T::lit(count as f64);
            let mut sq = T::zero();
            for b in 0..n {
                for &v in &xhat.data()[(b * c + ch) * plane..][..plane] {
                    sq += (v - mean) * (v - mean);
                }
            }
            let var = sq / T::lit(count as f64);
            let inv = T::one() / (var + T::lit(self.eps)).sqrt();
            inv_std[ch] = inv;
            for b in 0..n {
                for v in &mut xhat.data_mut()[(b * c + ch) * plane..][..plane] {
                    *v = (*v - mean) * inv;
                }
            }
            let m = T::lit(self.momentum);
            let unbiased = if count > 1 { sq / T::lit((count - 1) as f64) } else { var };
            let rm = &mut self.running_mean.value[ch];
            *rm = (T::one() - m) * *rm + m * mean;
            let rv = &mut self.running_var.value[ch];
            *rv = (T::one() - m) * *rv + m * unbiased;
        }
        let mut y = xhat.clone();
        for ch in 0..c {
            let (g, bt) = (self.gamma.value[ch], self.beta.value[ch]);
            for b in 0..n {
                for v in &mut y.data_mut()[(b * c + ch) * plane..][..plane] {
                    *v = *v * g + bt;
                }
            }
        }
        self.cache = Some(Cache { xhat, inv_std });
        y
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Tensor<T> {
        let Cache { xhat, inv_std } = taken(&mut self.cache, "batch norm");
        let [n, c, h, w] = xhat.shape();
        let plane = h * w;
        let count = T::lit((n * plane) as f64);
        let mut dx = Tensor::zeros(xhat.shape());
        for ch in 0..c {
            let idx = |b: usize| (b * c + ch) * plane..(b * c + ch + 1) * plane;
            let (mut sum_dy, mut sum_dy_xhat) = (T::zero(), T::zero());
            for b in 0..n {
                for (&d, &xh) in dy.data()[idx(b)].iter().zip(&xhat.data()[idx(b)]) {
                    sum_dy += d;
                    sum_dy_xhat += d * xh;
                }
            }
            self.gamma.grad[ch] += sum_dy_xhat;
            self.beta.grad[ch] += sum_dy;
            let k = self.gamma.value[ch] * inv_std[ch] / count;
            for b in 0..n {
                let r = idx(b);
                for ((o, &d), &xh) in dx.data_mut()[r.clone()].iter_mut().zip(&dy.data()[r.clone()]).zip(&xhat.data()[r]) {
                    *o = k * (count * d - sum_dy - xh * sum_dy_xhat);
                }
            }
        }
        dx
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input() -> Tensor<f64> {
        Tensor::from_vec([3, 2, 2, 2], (0..24).map(|v| ((v * 5 % 7) as f64).powi(2) / 10.0).collect()).unwrap()
    }

    #[test]
    fn normalises_each_channel() {
        let mut bn = BatchNorm2d::<f64>::new(2);
        let y = bn.forward_train(input());
        for ch in 0..2 {
            let vals: Vec<f64> = (0..3).flat_map(|b| y.data()[(b * 2 + ch) * 4..][..4].to_vec()).collect();
            let mean = vals.iter().sum::<f64>() / 12.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 12.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3);
        }
        assert!(bn.running_mean.value.iter().all(|&m| m > 0.0));
    }

    #[test]
    fn fresh_inference_is_near_identity() {
        let bn = BatchNorm2d::<f64>::new(2);
        let x = input();
        for (a, b) in bn.forward(&x).data().iter().zip(x.data()) {
            assert!((a - b / (1.0f64 + 1e-5).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut bn = BatchNorm2d::<f64>::new(2);
        bn.gamma.value = vec![1.5, -0.5];
        bn.beta.value = vec![0.2, 0.1];
        let weights: Vec<f64> = (0..24).map(|v| (v as f64 * 0.9).sin()).collect();
        let loss = |bn: &BatchNorm2d<f64>, x: &Tensor<f64>| -> f64 {
            let mut b = bn.clone();
            b.forward_train(x.clone()).data().iter().zip(&weights).map(|(a, w)| a * w).sum()
        };
        let x = input();
        let mut b = bn.clone();
        b.forward_train(x.clone());
        let dx = b.backward(&Tensor::from_vec([3, 2, 2, 2], weights.clone()).unwrap());
        let h = 1e-6;
        for i in 0..24 {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.data_mut()[i] += h;
            xm.data_mut()[i] -= h;
            let num = (loss(&bn, &xp) - loss(&bn, &xm)) / (2.0 * h);
            assert!((num - dx.data()[i]).abs() < 1e-6, "dx[{i}] {num} vs {}", dx.data()[i]);
        }
        let mut gp = bn.clone();
        gp.gamma.value[1] += h;
        let mut gm = bn.clone();
        gm.gamma.value[1] -= h;
        let num = (loss(&gp, &x) - loss(&gm, &x)) / (2.0 * h);
        assert!((num - b.gamma.grad[1]).abs() < 1e-6);
    }
}
