use alloc::vec::Vec;

use super::config::{ModelConfig, LOCALIZER_HIDDEN, LOCALIZER_WIDTHS};
use crate::nn::{modules, Conv2d, Linear, MaxPool2d, Real, Relu, Tensor};

/// Regresses one 2x3 affine matrix per frame.
#[derive(Debug, Clone)]
pub struct Localizer<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
    pub fc3: Linear<T>,
    pub fc4: Linear<T>,
    pool1: MaxPool2d,
    pool2: MaxPool2d,
    relus: [Relu; 5],
    conv_shape: [usize; 4],
}

modules!(Localizer { conv1, conv2, fc1, fc2, fc3, fc4 });

pub const IDENTITY_AFFINE: [f64; 6] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];

impl<T: Real> Localizer<T> {
    pub fn new(config: &ModelConfig) -> Self {
        let (c1, c2) = (config.width(LOCALIZER_WIDTHS[0]), config.width(LOCALIZER_WIDTHS[1]));
        let flat = config.localizer_trace()[4];
        let [h1, h2, h3] = LOCALIZER_HIDDEN;
        let mut fc4 = Linear::new(h3, 6, true);
        // identity transform until trained
        for (b, &v) in fc4.bias.as_mut().expect("bias").value.iter_mut().zip(&IDENTITY_AFFINE) {
            *b = T::lit(v);
        }
        Self {
            conv1: Conv2d::new(1, c1, 7, 2, 1, true),
            conv2: Conv2d::new(c1, c2, 7, 2, 1, true),
            fc1: Linear::new(flat, h1, true),
            fc2: Linear::new(h1, h2, true),
            fc3: Linear::new(h2, h3, true),
            fc4,
            pool1: MaxPool2d::new(2, 2, 0),
            pool2: MaxPool2d::new(2, 2, 0),
            relus: Default::default(),
            conv_shape: [0; 4],
        }
    }

    /// `6 * n` values, row-major 2x3 per frame.
    pub fn forward(&self, x: &Tensor<T>) -> Vec<T> {
        let h = self.pool1.forward(&Relu::forward(&self.conv1.forward(x)));
        let h = self.pool2.forward(&Relu::forward(&self.conv2.forward(&h)));
        let n = h.n();
        let h = h.reshape([n, self.fc1.in_features, 1, 1]);
        let h = Relu::forward(&self.fc1.forward(&h));
        let h = Relu::forward(&self.fc2.forward(&h));
        let h = Relu::forward(&self.fc3.forward(&h));
        self.fc4.forward(&h).into_vec()
    }

    pub fn forward_train(&mut self, x: Tensor<T>) -> Vec<T> {
        let h = self.conv1.forward_train(x);
        let h = self.pool1.forward_train(self.relus[0].forward_train(h));
        let h = self.conv2.forward_train(h);
        let h = self.pool2.forward_train(self.relus[1].forward_train(h));
        self.conv_shape = h.shape();
        let n = h.n();
        let h = h.reshape([n, self.fc1.in_features, 1, 1]);
        let h = self.relus[2].forward_train(self.fc1.forward_train(h));
        let h = self.relus[3].forward_train(self.fc2.forward_train(h));
        let h = self.relus[4].forward_train(self.fc3.forward_train(h));
        self.fc4.forward_train(h).into_vec()
    }

    /// Accumulates parameter gradients from the gradient of the matrices.
    /// The input gradient is not needed since the input is data.
    pub fn backward(&mut self, dtheta: Vec<T>) {
        let n = dtheta.len() / 6;
        let g = Tensor::from_vec([n, 6, 1, 1], dtheta).expect("six values per frame");
        let g = self.fc4.backward(&g);
        let g = self.fc3.backward(&self.relus[4].backward(g));
        let g = self.fc2.backward(&self.relus[3].backward(g));
        let g = self.fc1.backward(&self.relus[2].backward(g));
        let g = g.reshape(self.conv_shape);
        let g = self.conv2.backward(&self.relus[1].backward(self.pool2.backward(&g)));
        self.conv1.backward(&self.relus[0].backward(self.pool1.backward(&g)));
    }
}
