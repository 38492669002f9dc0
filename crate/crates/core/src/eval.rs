//! Probe-to-gallery distances, closed-set rank-n accuracy, open-set DIR at
//! fixed FAR levels, and per-camera aggregation of scene-pair results.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use num_traits::Float;

use crate::manifest::{ProbeGallerySpec, Protocol};
use crate::{Error, Result};

/// FAR levels (percent) reported by default.
pub const DEFAULT_FAR_LEVELS: [f64; 4] = [1.0, 10.0, 50.0, 100.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case", tag = "kind"))]
pub enum DistanceMetric {
    /// Euclidean distance between the concatenated vectors.
    #[default]
    Euclidean,
    /// Mean over patches of the Euclidean distance between `dim`-long patch
    /// vectors.
    PatchMean { dim: usize },
}

/// Probe rows by gallery columns; ids are subject ids.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: Vec<f64>,
    probe_ids: Vec<String>,
    gallery_ids: Vec<String>,
}

impl DistanceMatrix {
    pub fn new(values: Vec<f64>, probe_ids: Vec<String>, gallery_ids: Vec<String>) -> Result<Self> {
        if values.len() != probe_ids.len() * gallery_ids.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} distances for {}x{}",
                values.len(),
                probe_ids.len(),
                gallery_ids.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParameter(format!("distance {v} is not a finite nonnegative value")));
        }
        Ok(Self {
            values,
            probe_ids,
            gallery_ids,
        })
    }

    pub fn probes(&self) -> usize {
        self.probe_ids.len()
    }

    pub fn gallery(&self) -> usize {
        self.gallery_ids.len()
    }

    pub fn probe_ids(&self) -> &[String] {
        &self.probe_ids
    }

    pub fn gallery_ids(&self) -> &[String] {
        &self.gallery_ids
    }

    pub fn row(&self, probe: usize) -> &[f64] {
        let g = self.gallery();
        &self.values[probe * g..(probe + 1) * g]
    }

    pub fn get(&self, probe: usize, gallery: usize) -> f64 {
        self.row(probe)[gallery]
    }

    /// Rows for the given probes, in the given order.
    pub fn select_probes(&self, rows: &[usize]) -> Self {
        Self {
            values: rows.iter().flat_map(|&r| self.row(r).iter().copied()).collect(),
            probe_ids: rows.iter().map(|&r| self.probe_ids[r].clone()).collect(),
            gallery_ids: self.gallery_ids.clone(),
        }
    }

    /// Gallery indices by ascending distance; equal distances keep gallery order.
    pub fn ranking(&self, probe: usize) -> Vec<usize> {
        let row = self.row(probe);
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
        order
    }

    /// Nearest gallery entry and its distance; the first one on ties.
    pub fn best_match(&self, probe: usize) -> Option<(usize, f64)> {
        let row = self.row(probe);
        let mut best: Option<(usize, f64)> = None;
        for (j, &d) in row.iter().enumerate() {
            if best.map_or(true, |(_, b)| d < b) {
                best = Some((j, d));
            }
        }
        best
    }

    fn enrolled(&self, probe: usize) -> bool {
        self.gallery_ids.contains(&self.probe_ids[probe])
    }
}

fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Pairwise distances from `(subject_id, embedding)` probes to gallery entries.
pub fn distances(probe: &[(&str, &[f32])], gallery: &[(&str, &[f32])], metric: DistanceMetric) -> Result<DistanceMatrix> {
    let len = probe.first().or(gallery.first()).map_or(0, |e| e.1.len());
    if let Some(bad) = probe.iter().chain(gallery).find(|e| e.1.len() != len) {
        return Err(Error::DimensionMismatch(format!(
            "embedding of length {} among embeddings of length {len}",
            bad.1.len()
        )));
    }
    if let DistanceMetric::PatchMean { dim } = metric {
        if dim == 0 || len % dim != 0 {
            return Err(Error::InvalidParameter(format!("patch length {dim} does not divide {len}")));
        }
    }
    let mut values = Vec::with_capacity(probe.len() * gallery.len());
    for (_, p) in probe {
        for (_, g) in gallery {
            values.push(match metric {
                DistanceMetric::Euclidean => euclidean(p, g),
                DistanceMetric::PatchMean { dim } => {
                    let parts = (len / dim).max(1);
                    p.chunks(dim).zip(g.chunks(dim)).map(|(a, b)| euclidean(a, b)).sum::<f64>() / parts as f64
                }
            });
        }
    }
    DistanceMatrix::new(
        values,
        probe.iter().map(|e| e.0.into()).collect(),
        gallery.iter().map(|e| e.0.into()).collect(),
    )
}

/// Percentage of probes with a same-subject entry among their `n` nearest
/// gallery entries. Every probe subject must be enrolled.
pub fn rank_n(dist: &DistanceMatrix, n: usize) -> Result<f64> {
    if dist.probes() == 0 {
        return Err(Error::EmptyInput("probes"));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("rank must be at least 1".into()));
    }
    let mut hits = 0;
    for i in 0..dist.probes() {
        if !dist.enrolled(i) {
            return Err(Error::ProbeNotEnrolled(dist.probe_ids[i].clone()));
        }
        let id = &dist.probe_ids[i];
        if dist.ranking(i).iter().take(n).any(|&j| &dist.gallery_ids[j] == id) {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / dist.probes() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DirPoint {
    /// Percent.
    pub far: f64,
    /// Accepted best-match distances are strictly below this value.
    pub threshold: f64,
    /// Percent.
    pub dir: f64,
}

/// Rank-1 detection and identification rate at each FAR level (percent).
///
/// With `M` imposters sorted by best-match distance `s_1 <= .. <= s_M` and
/// `k = floor(far * M / 100)`, a genuine probe is accepted when its rank-1
/// match is same-subject and closer than `s_{k+1}`; every correct match is
/// accepted when `k = M`.
pub fn dir_at_far(dist: &DistanceMatrix, imposter: &[bool], far_levels: &[f64]) -> Result<Vec<DirPoint>> {
    if imposter.len() != dist.probes() {
        return Err(Error::DimensionMismatch(format!(
            "{} imposter flags for {} probes",
            imposter.len(),
            dist.probes()
        )));
    }
    if dist.gallery() == 0 {
        return Err(Error::EmptyInput("gallery"));
    }
    let mut imposter_best = Vec::new();
    let mut genuine = Vec::new();
    for i in 0..dist.probes() {
        let (j, d) = dist.best_match(i).expect("nonempty gallery");
        if imposter[i] {
            imposter_best.push(d);
        } else {
            if !dist.enrolled(i) {
                return Err(Error::ProbeNotEnrolled(dist.probe_ids[i].clone()));
            }
            genuine.push((dist.gallery_ids[j] == dist.probe_ids[i], d));
        }
    }
    if genuine.is_empty() {
        return Err(Error::EmptyInput("genuine probes"));
    }
    imposter_best.sort_by(f64::total_cmp);
    let m = imposter_best.len();
    let mut out = Vec::with_capacity(far_levels.len());
    for &far in far_levels {
        if !(0.0..=100.0).contains(&far) {
            return Err(Error::InvalidParameter(format!("FAR level {far} outside [0, 100]")));
        }
        if far < 100.0 && m == 0 {
            return Err(Error::NoImposters);
        }
        let k = Float::floor(far * m as f64 / 100.0 + 1e-9) as usize;
        let threshold = if k >= m { f64::INFINITY } else { imposter_best[k] };
        let accepted = genuine.iter().filter(|&&(ok, d)| ok && (threshold.is_infinite() || d < threshold)).count();
        out.push(DirPoint {
            far,
            threshold,
            dir: 100.0 * accepted as f64 / genuine.len() as f64,
        });
    }
    Ok(out)
}

/// Column means of equally long rows.
pub fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    let mut sums = vec![0.0; first.len()];
    for r in rows {
        for (s, v) in sums.iter_mut().zip(r) {
            *s += v;
        }
    }
    sums.into_iter().map(|s| s / rows.len() as f64).collect()
}

/// Embeddings addressed by video id.
pub trait EmbeddingLookup {
    fn embedding(&self, video_id: &str) -> Option<&[f32]>;
}

impl EmbeddingLookup for BTreeMap<String, Vec<f32>> {
    fn embedding(&self, video_id: &str) -> Option<&[f32]> {
        self.get(video_id).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalOptions {
    pub metric: DistanceMetric,
    pub ranks: Vec<usize>,
    pub far_levels: Vec<f64>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            metric: DistanceMetric::Euclidean,
            ranks: vec![1, 5, 10],
            far_levels: DEFAULT_FAR_LEVELS.to_vec(),
        }
    }
}

/// Values for one scene pair, one probe camera, or the whole protocol.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScoreRow {
    pub probe_camera: Option<u32>,
    pub gallery_camera: Option<u32>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalCounts {
    pub probes: usize,
    pub genuine: usize,
    pub imposters: usize,
    /// Closed-set probes left out because their subject has no gallery entry.
    pub excluded: usize,
    /// Scene pairs without genuine probes (or, for DIR, without imposters).
    pub skipped_pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub protocol: Protocol,
    pub ranks: Vec<usize>,
    pub far_levels: Vec<f64>,
    /// Rank-n accuracy per scene pair; a single row for multi-scene.
    pub pair_rank: Vec<ScoreRow>,
    /// Rank-n accuracy averaged over gallery cameras per probe camera.
    pub camera_rank: Vec<ScoreRow>,
    pub mean_rank: Vec<f64>,
    pub pair_dir: Vec<ScoreRow>,
    pub camera_dir: Vec<ScoreRow>,
    pub mean_dir: Vec<f64>,
    pub counts: EvalCounts,
}

fn per_camera(pairs: &[ScoreRow]) -> Vec<ScoreRow> {
    let mut by_camera: BTreeMap<u32, Vec<Vec<f64>>> = BTreeMap::new();
    for r in pairs {
        by_camera.entry(r.probe_camera.unwrap_or(0)).or_default().push(r.values.clone());
    }
    by_camera
        .into_iter()
        .map(|(c, rows)| ScoreRow {
            probe_camera: Some(c),
            gallery_camera: None,
            values: column_means(&rows),
        })
        .collect()
}

fn lookup<'a, E: EmbeddingLookup + ?Sized>(store: &'a E, video_id: &str) -> Result<&'a [f32]> {
    store.embedding(video_id).ok_or_else(|| Error::MissingEmbedding(video_id.into()))
}

/// Evaluates every spec of one protocol against stored embeddings.
pub fn run_protocol<E: EmbeddingLookup + ?Sized>(specs: &[ProbeGallerySpec], store: &E, options: &EvalOptions) -> Result<EvalReport> {
    let protocol = specs.first().ok_or(Error::EmptyInput("protocol specs"))?.protocol;
    if specs.iter().any(|s| s.protocol != protocol) {
        return Err(Error::InvalidParameter("specs mix protocols".into()));
    }
    let mut counts = EvalCounts::default();
    let mut pair_rank = Vec::new();
    let mut pair_dir = Vec::new();
    for spec in specs {
        let gallery = spec
            .gallery
            .iter()
            .map(|g| Ok((g.subject_id.as_str(), lookup(store, &g.video_id)?)))
            .collect::<Result<Vec<_>>>()?;
        let probe = spec
            .probe
            .iter()
            .map(|p| Ok((p.video.subject_id.as_str(), lookup(store, &p.video.video_id)?)))
            .collect::<Result<Vec<_>>>()?;
        let dist = distances(&probe, &gallery, options.metric)?;
        let enrolled: BTreeSet<&str> = gallery.iter().map(|g| g.0).collect();
        let genuine: Vec<usize> = (0..probe.len()).filter(|&i| enrolled.contains(probe[i].0)).collect();
        let imposters = probe.len() - genuine.len();
        counts.probes += probe.len();
        counts.genuine += genuine.len();
        if protocol == Protocol::OpenSetCrossScene {
            counts.imposters += imposters;
        } else {
            counts.excluded += imposters;
        }
        let (pc, gc) = spec.scene_pair.map_or((None, None), |(p, g)| (Some(p), Some(g)));
        if genuine.is_empty() {
            counts.skipped_pairs += 1;
            continue;
        }
        let closed = dist.select_probes(&genuine);
        let values = options.ranks.iter().map(|&n| rank_n(&closed, n)).collect::<Result<Vec<_>>>()?;
        pair_rank.push(ScoreRow {
            probe_camera: pc,
            gallery_camera: gc,
            values,
        });
        if protocol == Protocol::OpenSetCrossScene {
            if imposters == 0 && options.far_levels.iter().any(|&f| f < 100.0) {
                counts.skipped_pairs += 1;
                continue;
            }
            let flags: Vec<bool> = probe.iter().map(|p| !enrolled.contains(p.0)).collect();
            let dir = dir_at_far(&dist, &flags, &options.far_levels)?;
            pair_dir.push(ScoreRow {
                probe_camera: pc,
                gallery_camera: gc,
                values: dir.iter().map(|d| d.dir).collect(),
            });
        }
    }
    let camera_rank = if protocol == Protocol::MultiScene { Vec::new() } else { per_camera(&pair_rank) };
    let mean_rank = if protocol == Protocol::MultiScene {
        pair_rank.first().map(|r| r.values.clone()).unwrap_or_default()
    } else {
        column_means(&camera_rank.iter().map(|r| r.values.clone()).collect::<Vec<_>>())
    };
    let camera_dir = per_camera(&pair_dir);
    let mean_dir = column_means(&camera_dir.iter().map(|r| r.values.clone()).collect::<Vec<_>>());
    Ok(EvalReport {
        protocol,
        ranks: options.ranks.clone(),
        far_levels: if protocol == Protocol::OpenSetCrossScene { options.far_levels.clone() } else { Vec::new() },
        pair_rank,
        camera_rank,
        mean_rank,
        pair_dir,
        camera_dir,
        mean_dir,
        counts,
    })
}

fn table(out: &mut String, title: &str, header: &[String], rows: &[(String, &[f64])]) {
    let _ = writeln!(out, "{title}");
    let _ = write!(out, "{:<14}", "");
    for h in header {
        let _ = write!(out, "{h:>10}");
    }
    let _ = writeln!(out);
    for (label, values) in rows {
        let _ = write!(out, "{label:<14}");
        for v in *values {
            let _ = write!(out, "{v:>10.2}");
        }
        let _ = writeln!(out);
    }
}

impl EvalReport {
    /// Plain-text tables: per-camera rows followed by the mean row.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "protocol: {}", self.protocol);
        let c = &self.counts;
        let _ = writeln!(
            out,
            "probes: {}  genuine: {}  imposters: {}  excluded: {}  skipped pairs: {}",
            c.probes, c.genuine, c.imposters, c.excluded, c.skipped_pairs
        );
        let rank_header: Vec<String> = self.ranks.iter().map(|r| format!("rank-{r}")).collect();
        let camera = |r: &ScoreRow| match (r.probe_camera, r.gallery_camera) {
            (Some(p), Some(g)) => format!("#{p} -> #{g}"),
            (Some(p), None) => format!("probe #{p}"),
            _ => "all".into(),
        };
        let mut rows: Vec<(String, &[f64])> = Vec::new();
        if self.protocol == Protocol::MultiScene {
            rows.extend(self.pair_rank.iter().map(|r| (camera(r), r.values.as_slice())));
        } else {
            rows.extend(self.camera_rank.iter().map(|r| (camera(r), r.values.as_slice())));
            rows.push(("mean".into(), self.mean_rank.as_slice()));
        }
        table(&mut out, "rank-n accuracy (%)", &rank_header, &rows);
        if self.protocol == Protocol::OpenSetCrossScene {
            let header: Vec<String> = self.far_levels.iter().map(|f| format!("FAR {f}%")).collect();
            let mut rows: Vec<(String, &[f64])> = self.camera_dir.iter().map(|r| (camera(r), r.values.as_slice())).collect();
            rows.push(("mean".into(), self.mean_dir.as_slice()));
            let _ = writeln!(out);
            table(&mut out, "rank-1 DIR (%)", &header, &rows);
        }
        out
    }
}
