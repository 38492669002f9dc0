use alloc::vec::Vec;

use super::config::{ModelConfig, STAGE_WIDTHS, STEM_WIDTH};
use crate::nn::{modules, BatchNorm2d, Conv2d, MaxPool2d, Real, Relu, Tensor};

/// 1x1 convolution plus normalisation on the skip path.
#[derive(Debug, Clone)]
pub struct Projection<T> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm2d<T>,
}

modules!(Projection { conv, bn });

/// Two 3x3 convolutions with normalisation and a residual connection.
#[derive(Debug, Clone)]
pub struct BasicBlock<T> {
    pub conv1: Conv2d<T>,
    pub bn1: BatchNorm2d<T>,
    pub conv2: Conv2d<T>,
    pub bn2: BatchNorm2d<T>,
    pub shortcut: Option<Projection<T>>,
    relu1: Relu,
    relu_out: Relu,
}

modules!(BasicBlock { conv1, bn1, conv2, bn2, shortcut });

fn add<T: Real>(mut a: Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
        *x += y;
    }
    a
}

impl<T: Real> BasicBlock<T> {
    pub fn new(inp: usize, out: usize, stride: usize) -> Self {
        let shortcut = (inp != out || stride != 1).then(|| Projection {
            conv: Conv2d::new(inp, out, 1, stride, 0, false),
            bn: BatchNorm2d::new(out),
        });
        Self {
            conv1: Conv2d::new(inp, out, 3, stride, 1, false),
            bn1: BatchNorm2d::new(out),
            conv2: Conv2d::new(out, out, 3, 1, 1, false),
            bn2: BatchNorm2d::new(out),
            shortcut,
            relu1: Relu::new(),
            relu_out: Relu::new(),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let h = Relu::forward(&self.bn1.forward(&self.conv1.forward(x)));
        let h = self.bn2.forward(&self.conv2.forward(&h));
        let h = match &self.shortcut {
            Some(p) => add(h, &p.bn.forward(&p.conv.forward(x))),
            None => add(h, x),
        };
        Relu::forward(&h)
    }

    pub fn forward_train(&mut self, x: Tensor<T>) -> Tensor<T> {
        let skip = match &mut self.shortcut {
            Some(p) => {
                let s = p.conv.forward_train(x.clone());
                p.bn.forward_train(s)
            }
            None => x.clone(),
        };
        let h = self.bn1.forward_train(self.conv1.forward_train(x));
        let h = self.relu1.forward_train(h);
        let h = self.bn2.forward_train(self.conv2.forward_train(h));
        self.relu_out.forward_train(add(h, &skip))
    }

    pub fn backward(&mut self, dy: Tensor<T>) -> Tensor<T> {
        let d = self.relu_out.backward(dy);
        let dskip = match &mut self.shortcut {
            Some(p) => {
                let g = p.bn.backward(&d);
                p.conv.backward(&g)
            }
            None => d.clone(),
        };
        let g = self.conv2.backward(&self.bn2.backward(&d));
        let g = self.relu1.backward(g);
        let g = self.conv1.backward(&self.bn1.backward(&g));
        add(g, &dskip)
    }
}

/// Residual feature extractor: stem convolution and pooling followed by three
/// stages of two basic blocks.
#[derive(Debug, Clone)]
pub struct Backbone<T> {
    pub stem: Conv2d<T>,
    pub stem_bn: BatchNorm2d<T>,
    pub blocks: Vec<BasicBlock<T>>,
    stem_relu: Relu,
    stem_pool: MaxPool2d,
}

modules!(Backbone { stem, stem_bn, blocks });

impl<T: Real> Backbone<T> {
    pub fn new(config: &ModelConfig) -> Self {
        let stem_w = config.width(STEM_WIDTH);
        let widths = STAGE_WIDTHS.map(|w| config.width(w));
        let strides = [1, config.block23_stride, config.block23_stride];
        let mut blocks = Vec::new();
        let mut inp = stem_w;
        for (&w, &s) in widths.iter().zip(&strides) {
            blocks.push(BasicBlock::new(inp, w, s));
            blocks.push(BasicBlock::new(w, w, 1));
            inp = w;
        }
        Self {
            stem: Conv2d::new(1, stem_w, 7, 2, 3, false),
            stem_bn: BatchNorm2d::new(stem_w),
            blocks,
            stem_relu: Relu::new(),
            stem_pool: MaxPool2d::new(3, 2, 1),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let h = Relu::forward(&self.stem_bn.forward(&self.stem.forward(x)));
        let mut h = self.stem_pool.forward(&h);
        for b in &self.blocks {
            h = b.forward(&h);
        }
        h
    }

    pub fn forward_train(&mut self, x: Tensor<T>) -> Tensor<T> {
        let h = self.stem_bn.forward_train(self.stem.forward_train(x));
        let mut h = self.stem_pool.forward_train(self.stem_relu.forward_train(h));
        for b in &mut self.blocks {
            h = b.forward_train(h);
        }
        h
    }

    pub fn backward(&mut self, dy: Tensor<T>) -> Tensor<T> {
        let mut g = dy;
        for b in self.blocks.iter_mut().rev() {
            g = b.backward(g);
        }
        let g = self.stem_relu.backward(self.stem_pool.backward(&g));
        self.stem.backward(&self.stem_bn.backward(&g))
    }
}
