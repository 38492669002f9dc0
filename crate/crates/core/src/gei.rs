//! Gait energy images: the pixelwise mean of a set of silhouettes.
//!
//! Three frame groupings are provided: the whole sequence, k-means clusters of
//! similar-looking frames, and the straight legs of the walking trajectory as
//! found by penalised segmented least squares.

use alloc::vec;
use alloc::vec::Vec;
use alloc::format;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::downsample_area;
use crate::silhouette::{SilhouetteFrame, SilhouetteSequence};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum GeiKind {
    Full,
    Cluster,
    Piecewise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaitEnergyImage {
    pub width: usize,
    pub height: usize,
    /// Row-major values in `[0, 1]`.
    pub grid: Vec<f32>,
    pub source_frames: Vec<u64>,
    pub kind: GeiKind,
}

impl GaitEnergyImage {
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.grid[y * self.width + x]
    }

    /// Values scaled to 16-bit levels (`value * 65535`, rounded).
    pub fn to_u16(&self) -> Vec<u16> {
        self.grid.iter().map(|&v| Float::round(v.clamp(0.0, 1.0) * 65535.0) as u16).collect()
    }
}

fn mean_of(frames: &[&SilhouetteFrame], kind: GeiKind) -> GaitEnergyImage {
    let (w, h) = frames[0].grid.dims();
    let mut acc = vec![0u32; w * h];
    for f in frames {
        for (a, &v) in acc.iter_mut().zip(f.grid.data()) {
            *a += u32::from(v != 0);
        }
    }
    let n = frames.len() as f64;
    GaitEnergyImage {
        width: w,
        height: h,
        grid: acc.iter().map(|&a| (f64::from(a) / n) as f32).collect(),
        source_frames: frames.iter().map(|f| f.frame_index).collect(),
        kind,
    }
}

pub fn gei_full(seq: &SilhouetteSequence) -> Result<GaitEnergyImage> {
    if seq.is_empty() {
        return Err(Error::EmptyInput("sequence"));
    }
    let frames: Vec<&SilhouetteFrame> = seq.frames().iter().collect();
    Ok(mean_of(&frames, GeiKind::Full))
}

// ---------------------------------------------------------------------------
// clustering

/// Default number of clusters.
pub const DEFAULT_CLUSTERS: usize = 7;
/// Clustering feature grid: rows x columns of the downsampled silhouette.
pub const CLUSTER_FEATURE_ROWS: usize = 64;
pub const CLUSTER_FEATURE_COLS: usize = 44;
const KMEANS_MAX_ITERS: usize = 100;

fn cluster_features(frame: &SilhouetteFrame) -> Vec<f32> {
    let (w, h) = frame.grid.dims();
    let plane: Vec<f32> = frame.grid.data().iter().map(|&v| f32::from(u8::from(v != 0))).collect();
    downsample_area(&plane, w, h, CLUSTER_FEATURE_COLS, CLUSTER_FEATURE_ROWS)
}

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| f64::from(x - y) * f64::from(x - y)).sum()
}

/// Lloyd's k-means with k-means++ seeding. Returns one cluster label per
/// point. Empty clusters are re-seeded with the point farthest from its
/// current center.
pub fn kmeans(points: &[Vec<f32>], k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = points.len();
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    if n < k {
        return Err(Error::SequenceTooShort(format!("{n} frames for {k} clusters")));
    }
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centers: Vec<Vec<f32>> = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    chosen = i;
                    break;
                }
                r -= d;
            }
            chosen
        } else {
            // all remaining points coincide with a center
            rng.random_range(0..n)
        };
        centers.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = sq_dist(p, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        // re-seed empty clusters from the worst-fitting point
        for c in 0..k {
            if labels.contains(&c) {
                continue;
            }
            let mut counts = vec![0usize; k];
            for &l in &labels {
                counts[l] += 1;
            }
            let far = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&a, &b| {
                    let da = sq_dist(&points[a], &centers[labels[a]]);
                    let db = sq_dist(&points[b], &centers[labels[b]]);
                    da.partial_cmp(&db).unwrap_or(core::cmp::Ordering::Equal).then(b.cmp(&a))
                });
            if let Some(i) = far {
                labels[i] = c;
                centers[c] = points[i].clone();
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let mut sum = vec![0f64; dim];
            let mut count = 0usize;
            for (p, _) in points.iter().zip(&labels).filter(|(_, &l)| l == c) {
                for (s, &v) in sum.iter_mut().zip(p) {
                    *s += f64::from(v);
                }
                count += 1;
            }
            if count > 0 {
                for (dst, s) in center.iter_mut().zip(sum) {
                    *dst = (s / count as f64) as f32;
                }
            }
        }
    }
    Ok(labels)
}

/// One GEI per nonempty k-means cluster of the sequence's frames, ordered by
/// the first frame of each cluster.
pub fn gei_cluster(seq: &SilhouetteSequence, k: usize, seed: u64) -> Result<Vec<GaitEnergyImage>> {
    if seq.len() < k {
        return Err(Error::SequenceTooShort(format!("{} frames for {k} clusters", seq.len())));
    }
    let feats: Vec<Vec<f32>> = seq.frames().iter().map(cluster_features).collect();
    let labels = kmeans(&feats, k, seed)?;
    let mut order: Vec<usize> = Vec::new();
    for &l in &labels {
        if !order.contains(&l) {
            order.push(l);
        }
    }
    Ok(order
        .into_iter()
        .map(|c| {
            let members: Vec<&SilhouetteFrame> =
                seq.frames().iter().zip(&labels).filter(|(_, &l)| l == c).map(|(f, _)| f).collect();
            mean_of(&members, GeiKind::Cluster)
        })
        .collect())
}

// ---------------------------------------------------------------------------
// piecewise trajectory

/// Total-least-squares line through a point set.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LineFit {
    pub centroid: (f64, f64),
    /// Unit direction.
    pub direction: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrajectorySegment {
    /// Inclusive `[start, end]` positions in the point list.
    pub frame_span: (usize, usize),
    pub line: LineFit,
    /// Sum of squared perpendicular distances to `line`, in pixels².
    pub sse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SegmentOptions {
    /// Cost added per segment, in pixels².
    pub penalty: f64,
    /// Minimum number of points per segment.
    pub min_len: usize,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self {
            penalty: 200.0,
            min_len: 5,
        }
    }
}

/// Prefix sums over centered points; any span's scatter matrix in O(1).
struct Moments {
    sx: Vec<f64>,
    sy: Vec<f64>,
    sxx: Vec<f64>,
    syy: Vec<f64>,
    sxy: Vec<f64>,
    origin: (f64, f64),
}

impl Moments {
    fn new(points: &[(f64, f64)]) -> Self {
        let n = points.len() as f64;
        let ox = points.iter().map(|p| p.0).sum::<f64>() / n;
        let oy = points.iter().map(|p| p.1).sum::<f64>() / n;
        let mut m = Moments {
            sx: vec![0.0],
            sy: vec![0.0],
            sxx: vec![0.0],
            syy: vec![0.0],
            sxy: vec![0.0],
            origin: (ox, oy),
        };
        for &(x, y) in points {
            let (x, y) = (x - ox, y - oy);
            m.sx.push(m.sx.last().unwrap() + x);
            m.sy.push(m.sy.last().unwrap() + y);
            m.sxx.push(m.sxx.last().unwrap() + x * x);
            m.syy.push(m.syy.last().unwrap() + y * y);
            m.sxy.push(m.sxy.last().unwrap() + x * y);
        }
        m
    }

    /// Fit over inclusive span `[i, j]`.
    fn fit(&self, i: usize, j: usize) -> (LineFit, f64) {
        let n = (j - i + 1) as f64;
        let d = |v: &[f64]| v[j + 1] - v[i];
        let (mx, my) = (d(&self.sx) / n, d(&self.sy) / n);
        let cxx = (d(&self.sxx) - n * mx * mx).max(0.0);
        let cyy = (d(&self.syy) - n * my * my).max(0.0);
        let cxy = d(&self.sxy) - n * mx * my;
        let half_tr = (cxx + cyy) / 2.0;
        let disc = Float::sqrt(((cxx - cyy) / 2.0).powi(2) + cxy * cxy);
        let sse = (half_tr - disc).max(0.0);
        let major = half_tr + disc;
        // eigenvector of the larger eigenvalue
        let (vx, vy) = if Float::abs(cxy) > 1e-12 {
            (major - cyy, cxy)
        } else if cxx >= cyy {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        };
        let norm = Float::sqrt(vx * vx + vy * vy);
        let line = LineFit {
            centroid: (mx + self.origin.0, my + self.origin.1),
            direction: (vx / norm, vy / norm),
        };
        (line, sse)
    }
}

/// Splits an ordered trajectory into straight runs, minimising the total
/// line-fit error plus `penalty` per segment. Solved exactly by dynamic
/// programming over split points; ties keep the earliest split.
pub fn segment_trajectory(points: &[(f64, f64)], options: SegmentOptions) -> Result<Vec<TrajectorySegment>> {
    let n = points.len();
    if n < 2 {
        return Err(Error::SequenceTooShort(format!("{n} trajectory points")));
    }
    if !(options.penalty >= 0.0) {
        return Err(Error::InvalidParameter("penalty must be nonnegative".into()));
    }
    let min_len = options.min_len.max(2);
    let mom = Moments::new(points);
    if n < 2 * min_len {
        let (line, sse) = mom.fit(0, n - 1);
        return Ok(vec![TrajectorySegment {
            frame_span: (0, n - 1),
            line,
            sse,
        }]);
    }
    // best[j]: optimal cost of points[0..j]
    let mut best = vec![f64::INFINITY; n + 1];
    let mut split = vec![0usize; n + 1];
    best[0] = 0.0;
    for j in min_len..=n {
        for i in 0..=j - min_len {
            if !best[i].is_finite() {
                continue;
            }
            let cost = best[i] + mom.fit(i, j - 1).1 + options.penalty;
            if cost < best[j] {
                best[j] = cost;
                split[j] = i;
            }
        }
    }
    let mut segments = Vec::new();
    let mut j = n;
    while j > 0 {
        let i = split[j];
        let (line, sse) = mom.fit(i, j - 1);
        segments.push(TrajectorySegment {
            frame_span: (i, j - 1),
            line,
            sse,
        });
        j = i;
    }
    segments.reverse();
    Ok(segments)
}

/// One GEI per straight trajectory segment.
pub fn gei_piecewise(seq: &SilhouetteSequence, options: SegmentOptions) -> Result<(Vec<GaitEnergyImage>, Vec<TrajectorySegment>)> {
    let segments = segment_trajectory(&seq.trajectory(), options)?;
    let geis = segments
        .iter()
        .map(|s| {
            let frames: Vec<&SilhouetteFrame> = seq.frames()[s.frame_span.0..=s.frame_span.1].iter().collect();
            mean_of(&frames, GeiKind::Piecewise)
        })
        .collect();
    Ok((geis, segments))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;

    fn frame(i: u64, f: impl Fn(usize, usize) -> bool, pt: (f64, f64)) -> SilhouetteFrame {
        SilhouetteFrame {
            grid: Image::from_fn(16, 16, 1, |x, y, _| u8::from(f(x, y))),
            frame_index: i,
            trajectory_point: pt,
        }
    }

    fn seq(frames: Vec<SilhouetteFrame>) -> SilhouetteSequence {
        SilhouetteSequence::new(frames, "s".into(), 1, "v".into()).unwrap()
    }

    #[test]
    fn identical_frames_give_that_frame() {
        let s = seq((0..5).map(|i| frame(i, |x, y| x < y, (0.0, 0.0))).collect());
        let g = gei_full(&s).unwrap();
        assert_eq!(g.kind, GeiKind::Full);
        for y in 0..16 {
            for x in 0..16 {
                assert_eq!(g.get(x, y), if x < y { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn ones_and_zeros_average_to_half() {
        let s = seq(vec![frame(0, |_, _| true, (0.0, 0.0)), frame(1, |_, _| false, (0.0, 0.0))]);
        assert!(gei_full(&s).unwrap().grid.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn singleton_clusters_when_k_equals_len() {
        let s = seq((0..4).map(|i| frame(i, move |x, _| x < 4 * i as usize + 2, (0.0, 0.0))).collect());
        let geis = gei_cluster(&s, 4, 9).unwrap();
        assert_eq!(geis.len(), 4);
        for g in &geis {
            assert_eq!(g.source_frames.len(), 1);
            let f = &s.frames()[g.source_frames[0] as usize];
            for (a, &b) in g.grid.iter().zip(f.grid.data()) {
                assert_eq!(*a, f32::from(b));
            }
        }
        assert!(gei_cluster(&s, 5, 9).is_err());
    }

    #[test]
    fn collinear_points_form_one_segment() {
        let pts: Vec<(f64, f64)> = (0..20).map(|i| (3.0 * i as f64 + 1.0, 2.0 * i as f64 - 5.0)).collect();
        let segs = segment_trajectory(&pts, SegmentOptions { penalty: 0.5, min_len: 5 }).unwrap();
        assert_eq!(segs.len(), 1);
        assert!(segs[0].sse < 1e-9);
        let (dx, dy) = segs[0].line.direction;
        assert!((dx * 2.0 - dy * 3.0).abs() < 1e-9);
    }

    #[test]
    fn vertical_run_is_a_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (7.0, i as f64)).collect();
        let segs = segment_trajectory(&pts, SegmentOptions::default()).unwrap();
        assert_eq!(segs.len(), 1);
        assert!(segs[0].sse < 1e-12);
        assert!((segs[0].line.direction.1.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn huge_penalty_forces_one_segment() {
        let pts: Vec<(f64, f64)> = (0..30).map(|i| (i as f64, ((i * i) % 17) as f64 * 10.0)).collect();
        let segs = segment_trajectory(&pts, SegmentOptions { penalty: 1e12, min_len: 5 }).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].frame_span, (0, 29));
    }

    #[test]
    fn too_few_points() {
        assert!(segment_trajectory(&[(0.0, 0.0)], SegmentOptions::default()).is_err());
    }

    fn l_corner() -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 0.0)).collect();
        pts.extend((1..=10).map(|j| (10.0, j as f64)));
        pts
    }

    #[test]
    fn l_corner_splits_at_the_corner() {
        let pts = l_corner();
        let segs = segment_trajectory(&pts, SegmentOptions { penalty: 1.0, min_len: 5 }).unwrap();
        assert_eq!(segs.iter().map(|s| s.frame_span).collect::<Vec<_>>(), vec![(0, 9), (10, 19)]);
        // brute force over every two-way split: the corner is the unique minimiser
        let mom = Moments::new(&pts);
        let costs: Vec<f64> = (1..pts.len()).map(|k| mom.fit(0, k - 1).1 + mom.fit(k, pts.len() - 1).1).collect();
        let best = costs.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(costs.iter().position(|&c| c == best), Some(9));
        assert!(costs.iter().filter(|&&c| c <= best + 1e-9).count() == 1);
    }

    #[test]
    fn straight_walk_piecewise_equals_full() {
        let s = seq((0..12).map(|i| frame(i, move |x, y| (x + y + i as usize) % 3 == 0, (2.0 * i as f64, 5.0))).collect());
        let (geis, segs) = gei_piecewise(&s, SegmentOptions::default()).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(geis[0].grid, gei_full(&s).unwrap().grid);
    }

    #[test]
    fn corner_walk_partitions_frames_at_the_corner() {
        let s = seq(l_corner().into_iter().enumerate().map(|(i, p)| frame(i as u64, move |x, _| x == i % 16, p)).collect());
        let (geis, _) = gei_piecewise(&s, SegmentOptions { penalty: 1.0, min_len: 5 }).unwrap();
        assert_eq!(geis.len(), 2);
        assert_eq!(geis[0].source_frames, (0..10).collect::<Vec<u64>>());
        assert_eq!(geis[1].source_frames, (10..20).collect::<Vec<u64>>());
    }

    #[test]
    fn separable_frames_cluster_by_pattern() {
        let s = seq((0..14)
            .map(|i| {
                let left = i % 2 == 0;
                frame(i, move |x, y| if left { x < 6 && y != (i as usize) } else { x > 9 && y != (i as usize) }, (0.0, 0.0))
            })
            .collect());
        let geis = gei_cluster(&s, 2, 3).unwrap();
        assert_eq!(geis.len(), 2);
        let mut all: Vec<u64> = geis.iter().flat_map(|g| g.source_frames.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..14).collect::<Vec<u64>>());
        for g in &geis {
            assert_eq!(g.source_frames.len(), 7);
            let parity = g.source_frames[0] % 2;
            assert!(g.source_frames.iter().all(|f| f % 2 == parity));
        }
        assert_eq!(gei_cluster(&s, 2, 3).unwrap(), geis);
    }
}
