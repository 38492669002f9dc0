use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::Rng;

use crate::manifest::{DatasetManifest, Split};
use crate::sampling::{SampledClip, SamplingConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainVideo {
    pub video_id: String,
    /// Silhouette frames available for the video.
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainSubject {
    pub subject_id: String,
    pub videos: Vec<TrainVideo>,
}

/// Training identities and their usable videos, ordered by subject id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingSet {
    subjects: Vec<TrainSubject>,
}

impl TrainingSet {
    /// Subjects without any video with frames are left out.
    pub fn new(mut subjects: Vec<TrainSubject>) -> Self {
        for s in &mut subjects {
            s.videos.retain(|v| v.frames > 0);
            s.videos.sort_by(|a, b| a.video_id.cmp(&b.video_id));
        }
        subjects.retain(|s| !s.videos.is_empty());
        subjects.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
        Self { subjects }
    }

    /// Training-split videos with their extracted frame counts. Videos
    /// missing from `frame_counts` are skipped.
    pub fn from_manifest(manifest: &DatasetManifest, frame_counts: &BTreeMap<String, usize>) -> Self {
        let mut by_subject: BTreeMap<&str, Vec<TrainVideo>> = BTreeMap::new();
        for r in manifest.records_in(Split::Train) {
            if let Some(&frames) = frame_counts.get(&r.video_id) {
                by_subject.entry(&r.subject_id).or_default().push(TrainVideo {
                    video_id: r.video_id.clone(),
                    frames,
                });
            }
        }
        Self::new(
            by_subject
                .into_iter()
                .map(|(s, videos)| TrainSubject {
                    subject_id: s.into(),
                    videos,
                })
                .collect(),
        )
    }

    pub fn subjects(&self) -> &[TrainSubject] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchEntry {
    pub subject_id: String,
    pub video_id: String,
    pub clip: SampledClip,
}

/// `p` identities with `k` clips each, grouped by identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PKBatch {
    pub entries: Vec<BatchEntry>,
    pub p: usize,
    pub k: usize,
}

impl PKBatch {
    /// Identity index (0..p) of each entry.
    pub fn labels(&self) -> Vec<usize> {
        (0..self.entries.len()).map(|i| i / self.k).collect()
    }
}

/// Draws `p` subjects without replacement, then `k` videos per subject
/// (without replacement when the subject has at least `k`), then one clip
/// per video.
pub fn pk_sample<R: Rng + ?Sized>(
    set: &TrainingSet,
    p: usize,
    k: usize,
    sampling: &SamplingConfig,
    rng: &mut R,
) -> Result<PKBatch> {
    if p == 0 || k == 0 {
        return Err(Error::InvalidParameter(format!("p and k must be positive, got {p} and {k}")));
    }
    if set.len() < p {
        return Err(Error::NotEnoughSubjects {
            needed: p,
            available: set.len(),
        });
    }
    let mut entries = Vec::with_capacity(p * k);
    for si in sample(rng, set.len(), p).into_iter() {
        let subject = &set.subjects[si];
        let nv = subject.videos.len();
        let picks: Vec<usize> = if nv >= k {
            sample(rng, nv, k).into_vec()
        } else {
            (0..k).map(|_| rng.random_range(0..nv)).collect()
        };
        for vi in picks {
            let video = &subject.videos[vi];
            entries.push(BatchEntry {
                subject_id: subject.subject_id.clone(),
                video_id: video.video_id.clone(),
                clip: sampling.sample(video.frames, rng)?,
            });
        }
    }
    Ok(PKBatch { entries, p, k })
}
