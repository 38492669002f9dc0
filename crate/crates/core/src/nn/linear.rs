use super::{gemm, modules, taken, Param, Real, Tensor};

/// Fully connected layer, `y = x W^T + b`, over the flattened items of a
/// batch. Rows are multiplied one at a time.
#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    pub in_features: usize,
    pub out_features: usize,
    input: Option<Tensor<T>>,
}

modules!(Linear { weight, bias });

impl<T: Real> Linear<T> {
    pub fn new(in_features: usize, out_features: usize, bias: bool) -> Self {
        Self {
            weight: Param::new(&[out_features, in_features], T::zero()),
            bias: bias.then(|| Param::new(&[out_features], T::zero())),
            in_features,
            out_features,
            input: None,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        assert_eq!(x.item_len(), self.in_features, "linear input width");
        let mut y = Tensor::zeros([x.n(), self.out_features, 1, 1]);
        for i in 0..x.n() {
            let out = y.item_mut(i);
            if let Some(b) = &self.bias {
                out.copy_from_slice(&b.value);
            }
            gemm(1, self.in_features, self.out_features, x.item(i), false, &self.weight.value, true, T::one(), out);
        }
        y
    }

    pub fn forward_train(&mut self, x: Tensor<T>) -> Tensor<T> {
        let y = self.forward(&x);
        self.input = Some(x);
        y
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Tensor<T> {
        let x = taken(&mut self.input, "linear");
        let n = x.n();
        gemm(self.out_features, n, self.in_features, dy.data(), true, x.data(), false, T::one(), &mut self.weight.grad);
        if let Some(b) = &mut self.bias {
            for i in 0..n {
                for (g, &d) in b.grad.iter_mut().zip(dy.item(i)) {
                    *g += d;
                }
            }
        }
        let mut dx = Tensor::zeros(x.shape());
        gemm(n, self.out_features, self.in_features, dy.data(), false, &self.weight.value, false, T::zero(), dx.data_mut());
        dx
    }

    pub fn clear_cache(&mut self) {
        self.input = None;
    }
}
