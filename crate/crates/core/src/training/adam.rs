use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::nn::{Module, Real};

/// Adam without weight decay. Moment buffers follow the traversal order of
/// the trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub steps: u64,
    pub first_moment: Vec<Vec<T>>,
    pub second_moment: Vec<Vec<T>>,
}

impl<T: Real> Default for Adam<T> {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }
}

impl<T: Real> Adam<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// One update of every trainable parameter from its accumulated gradient.
    pub fn step<M: Module<T> + ?Sized>(&mut self, module: &mut M, learning_rate: f64) {
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - Float::powi(self.beta1, t);
        let c2 = 1.0 - Float::powi(self.beta2, t);
        let (b1, b2, eps) = (T::lit(self.beta1), T::lit(self.beta2), T::lit(self.eps));
        let step = T::lit(learning_rate / c1);
        let c2 = T::lit(c2);
        let mut slot = 0;
        let (m_all, v_all) = (&mut self.first_moment, &mut self.second_moment);
        module.visit_mut("", &mut |_, p| {
            if !p.trainable {
                return;
            }
            if m_all.len() <= slot {
                m_all.push(vec![T::zero(); p.len()]);
                v_all.push(vec![T::zero(); p.len()]);
            }
            let (m, v) = (&mut m_all[slot], &mut v_all[slot]);
            assert_eq!(m.len(), p.len(), "optimizer state does not match parameter {slot}");
            for (((w, &g), mi), vi) in p.value.iter_mut().zip(&p.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (T::one() - b1) * g;
                *vi = b2 * *vi + (T::one() - b2) * g * g;
                *w -= step * *mi / ((*vi / c2).sqrt() + eps);
            }
            slot += 1;
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Param;

    #[test]
    fn zero_rate_leaves_parameters() {
        let mut p = Param::<f32>::new(&[3], 0.5);
        p.grad = vec![1.0, -2.0, 0.0];
        let before = p.value.clone();
        Adam::new().step(&mut p, 0.0);
        assert_eq!(p.value, before);
    }

    #[test]
    fn first_step_moves_by_the_rate() {
        let mut p = Param::<f64>::new(&[2], 1.0);
        p.grad = vec![3.0, -0.5];
        Adam::new().step(&mut p, 0.1);
        assert!((p.value[0] - 0.9).abs() < 1e-6);
        assert!((p.value[1] - 1.1).abs() < 1e-6);
    }

    #[test]
    fn buffers_are_skipped() {
        let mut p = Param::<f64>::buffer(&[1], 2.0);
        p.grad = vec![1.0];
        let mut opt = Adam::new();
        opt.step(&mut p, 1.0);
        assert_eq!(p.value, vec![2.0]);
        assert!(opt.first_moment.is_empty());
    }
}
