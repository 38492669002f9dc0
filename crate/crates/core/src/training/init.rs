//! Weight initialisation: He-normal for backbone convolutions, Xavier-normal
//! for every other learned map, identity for the last localizer layer.

use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::model::{GaitNet, IDENTITY_AFFINE};
use crate::nn::{Conv2d, Linear, Module, Param, Real};

fn fill_normal<T: Real, R: Rng + ?Sized>(p: &mut Param<T>, std: f64, rng: &mut R) {
    for v in &mut p.value {
        let z: f64 = StandardNormal.sample(rng);
        *v = T::lit(z * std);
    }
}

fn he_conv<T: Real, R: Rng + ?Sized>(c: &mut Conv2d<T>, rng: &mut R) {
    let fan_in = c.in_channels * c.kernel * c.kernel;
    fill_normal(&mut c.weight, Float::sqrt(2.0 / fan_in as f64), rng);
    if let Some(b) = &mut c.bias {
        b.value.iter_mut().for_each(|v| *v = T::zero());
    }
}

fn xavier_conv<T: Real, R: Rng + ?Sized>(c: &mut Conv2d<T>, rng: &mut R) {
    let k2 = c.kernel * c.kernel;
    let fans = (c.in_channels * k2 + c.out_channels * k2) as f64;
    fill_normal(&mut c.weight, Float::sqrt(2.0 / fans), rng);
    if let Some(b) = &mut c.bias {
        b.value.iter_mut().for_each(|v| *v = T::zero());
    }
}

fn xavier_linear<T: Real, R: Rng + ?Sized>(l: &mut Linear<T>, rng: &mut R) {
    let fans = (l.in_features + l.out_features) as f64;
    fill_normal(&mut l.weight, Float::sqrt(2.0 / fans), rng);
    if let Some(b) = &mut l.bias {
        b.value.iter_mut().for_each(|v| *v = T::zero());
    }
}

/// Re-initialises every parameter and normalisation statistic in place.
pub fn initialize<T: Real, R: Rng + ?Sized>(net: &mut GaitNet<T>, rng: &mut R) {
    let bb = &mut net.backbone;
    he_conv(&mut bb.stem, rng);
    for block in &mut bb.blocks {
        he_conv(&mut block.conv1, rng);
        he_conv(&mut block.conv2, rng);
        if let Some(p) = &mut block.shortcut {
            he_conv(&mut p.conv, rng);
        }
    }
    net.backbone.visit_mut("", &mut |name, p| {
        let fill = if name.ends_with("gamma") || name.ends_with("running_var") {
            T::one()
        } else if name.ends_with("beta") || name.ends_with("running_mean") {
            T::zero()
        } else {
            return;
        };
        p.value.iter_mut().for_each(|v| *v = fill);
    });

    if let Some(loc) = &mut net.localizer {
        xavier_conv(&mut loc.conv1, rng);
        xavier_conv(&mut loc.conv2, rng);
        xavier_linear(&mut loc.fc1, rng);
        xavier_linear(&mut loc.fc2, rng);
        xavier_linear(&mut loc.fc3, rng);
        loc.fc4.weight.value.iter_mut().for_each(|v| *v = T::zero());
        if let Some(b) = &mut loc.fc4.bias {
            for (v, &i) in b.value.iter_mut().zip(&IDENTITY_AFFINE) {
                *v = T::lit(i);
            }
        }
    }

    let ppm = &mut net.ppm;
    fill_normal(&mut ppm.maps, Float::sqrt(2.0 / (ppm.channels + ppm.dim) as f64), rng);
    net.zero_grad();
}
