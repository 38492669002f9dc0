//! Batch-all triplet loss applied independently to every patch vector.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::nn::Real;

/// Distances below this are treated as zero and pass no gradient.
const MIN_DISTANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TripletConfig {
    pub margin: f64,
    /// Average over triples with positive loss only; otherwise over all
    /// valid triples.
    pub average_nonzero: bool,
}

impl Default for TripletConfig {
    fn default() -> Self {
        Self {
            margin: 0.2,
            average_nonzero: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletOutput<T> {
    pub loss: f64,
    /// Same layout as the input features.
    pub grad: Vec<T>,
    /// Valid (anchor, positive, negative) triples per patch.
    pub triples: usize,
    /// Triples with positive loss, summed over patches.
    pub active: usize,
}

impl<T> TripletOutput<T> {
    /// No valid triple exists (a single identity, or no identity with two
    /// samples).
    pub fn degenerate(&self) -> bool {
        self.triples == 0
    }
}

/// `features` holds `n` samples, each `patches` vectors of `dim` values,
/// sample-major then patch-major. The result is the mean over patches of each
/// patch's averaged hinge `max(0, margin + D(a, p) - D(a, n))`.
pub fn batch_all_triplet<T: Real, L: PartialEq>(
    features: &[T],
    labels: &[L],
    patches: usize,
    dim: usize,
    config: TripletConfig,
) -> TripletOutput<T> {
    let n = labels.len();
    assert_eq!(features.len(), n * patches * dim, "feature layout");
    let mut grad = vec![T::zero(); features.len()];
    let at = |s: usize, p: usize| (s * patches + p) * dim;

    let mut triples = 0;
    for a in 0..n {
        let pos = (0..n).filter(|&q| q != a && labels[q] == labels[a]).count();
        let neg = (0..n).filter(|&q| labels[q] != labels[a]).count();
        triples += pos * neg;
    }

    let mut patch_losses = Vec::with_capacity(patches);
    let mut active_total = 0;
    let mut dist = vec![0f64; n * n];
    let mut coef = vec![0f64; n * n];
    for p in 0..patches {
        for i in 0..n {
            for j in i + 1..n {
                let d2: f64 = features[at(i, p)..at(i, p) + dim]
                    .iter()
                    .zip(&features[at(j, p)..at(j, p) + dim])
                    .map(|(&x, &y)| {
                        let d = (x - y).to_f64().unwrap_or(f64::NAN);
                        d * d
                    })
                    .sum();
                dist[i * n + j] = Float::sqrt(d2);
                dist[j * n + i] = Float::sqrt(d2);
            }
        }
        coef.iter_mut().for_each(|c| *c = 0.0);
        let (mut active, mut excess) = (0usize, 0f64);
        for a in 0..n {
            for q in 0..n {
                if q == a || labels[q] != labels[a] {
                    continue;
                }
                for r in 0..n {
                    if labels[r] == labels[a] {
                        continue;
                    }
                    let diff = dist[a * n + q] - dist[a * n + r];
                    if config.margin + diff > 0.0 {
                        active += 1;
                        excess += diff;
                        coef[a * n + q] += 1.0;
                        coef[a * n + r] -= 1.0;
                    }
                }
            }
        }
        active_total += active;
        // written as margin plus mean excess so equal inputs give the margin exactly
        let (loss, denom) = if active == 0 {
            (0.0, 0.0)
        } else if config.average_nonzero {
            (config.margin + excess / active as f64, active as f64)
        } else {
            (config.margin * (active as f64 / triples as f64) + excess / triples as f64, triples as f64)
        };
        patch_losses.push(loss);
        if active == 0 {
            continue;
        }
        let scale = 1.0 / (denom * patches as f64);
        for i in 0..n {
            for j in 0..n {
                let c = coef[i * n + j];
                let d = dist[i * n + j];
                if c == 0.0 || d < MIN_DISTANCE {
                    continue;
                }
                let k = T::lit(c * scale / d);
                for e in 0..dim {
                    let diff = features[at(i, p) + e] - features[at(j, p) + e];
                    grad[at(i, p) + e] += k * diff;
                    grad[at(j, p) + e] -= k * diff;
                }
            }
        }
    }
    let first = patch_losses.first().copied().unwrap_or(0.0);
    let loss = first + patch_losses.iter().map(|l| l - first).sum::<f64>() / patches.max(1) as f64;
    TripletOutput {
        loss,
        grad,
        triples,
        active: active_total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive enumeration straight from the definition.
    fn oracle(x: &[f64], labels: &[u8], patches: usize, dim: usize, margin: f64) -> f64 {
        let n = labels.len();
        let v = |s: usize, p: usize| &x[(s * patches + p) * dim..(s * patches + p + 1) * dim];
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let mut total = 0.0;
        for p in 0..patches {
            let mut losses = Vec::new();
            for a in 0..n {
                for q in 0..n {
                    for r in 0..n {
                        if q != a && labels[q] == labels[a] && labels[r] != labels[a] {
                            let l = margin + d(v(a, p), v(q, p)) - d(v(a, p), v(r, p));
                            if l > 0.0 {
                                losses.push(l);
                            }
                        }
                    }
                }
            }
            if !losses.is_empty() {
                total += losses.iter().sum::<f64>() / losses.len() as f64;
            }
        }
        total / patches as f64
    }

    #[test]
    fn hand_placed_points() {
        let x = [0.0, 0.0, 0.1, 0.0, 1.0, 0.0, 0.15, 0.3];
        let labels = [0u8, 0, 1, 1];
        let out = batch_all_triplet(&x, &labels, 1, 2, TripletConfig::default());
        assert_eq!(out.triples, 8);
        assert!((out.loss - oracle(&x, &labels, 1, 2, 0.2)).abs() < 1e-12);
        assert!(out.loss > 0.0);
    }

    #[test]
    fn identical_points_give_the_margin() {
        let x = [0.5f64; 6 * 3 * 2];
        let out = batch_all_triplet(&x, &[1, 1, 2, 2, 3, 3], 3, 2, TripletConfig::default());
        assert_eq!(out.loss, 0.2);
        assert!(out.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn separated_clusters_give_zero() {
        let x = [0.0, 0.0, 0.05, 0.0, 5.0, 5.0, 5.0, 5.05];
        let out = batch_all_triplet(&x, &[0, 0, 1, 1], 1, 2, TripletConfig::default());
        assert_eq!(out.loss, 0.0);
        assert_eq!(out.active, 0);
    }

    #[test]
    fn single_identity_is_degenerate() {
        let out = batch_all_triplet(&[0.0f64, 1.0, 2.0], &[4, 4, 4], 1, 1, TripletConfig::default());
        assert!(out.degenerate());
        assert_eq!(out.loss, 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x: Vec<f64> = (0..6 * 2 * 3).map(|v| ((v * 37 % 29) as f64) / 29.0).collect();
        let labels = [0u8, 0, 1, 1, 2, 2];
        for cfg in [TripletConfig::default(), TripletConfig { margin: 0.3, average_nonzero: false }] {
            let out = batch_all_triplet(&x, &labels, 2, 3, cfg);
            let h = 1e-7;
            for i in 0..x.len() {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[i] += h;
                xm[i] -= h;
                let num = (batch_all_triplet(&xp, &labels, 2, 3, cfg).loss - batch_all_triplet(&xm, &labels, 2, 3, cfg).loss) / (2.0 * h);
                assert!((num - out.grad[i]).abs() < 1e-6, "grad[{i}] {num} vs {}", out.grad[i]);
            }
        }
    }
}
