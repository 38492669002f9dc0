//! Silhouette directories: `<root>/<video_id>/<frame_index>.png` plus a
//! `sequence.json` sidecar with trajectory points and dropped frames.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gaitkit_core::model::frame_input;
use gaitkit_core::silhouette::{DroppedFrame, SilhouetteFrame, SilhouetteSequence};
use gaitkit_core::training::ClipSource;
use serde::{Deserialize, Serialize};

use crate::io::{read_json, read_mask_png, write_json, write_mask_png};
use crate::{Error, Result};

pub const SIDECAR: &str = "sequence.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub frame_index: u64,
    pub trajectory_point: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSidecar {
    pub subject_id: String,
    pub camera_id: u32,
    pub video_id: String,
    pub frames: Vec<FrameEntry>,
    pub dropped: Vec<DroppedFrame>,
}

pub fn frame_file(dir: &Path, frame_index: u64) -> PathBuf {
    dir.join(format!("{frame_index}.png"))
}

/// Writes frames and sidecar into `dir`, which must not hold other frames.
pub fn write_sequence(dir: &Path, seq: &SilhouetteSequence, dropped: &[DroppedFrame]) -> Result<()> {
    for f in seq.frames() {
        write_mask_png(&frame_file(dir, f.frame_index), &f.grid)?;
    }
    let sidecar = SequenceSidecar {
        subject_id: seq.subject_id.clone(),
        camera_id: seq.camera_id,
        video_id: seq.video_id.clone(),
        frames: seq
            .frames()
            .iter()
            .map(|f| FrameEntry {
                frame_index: f.frame_index,
                trajectory_point: f.trajectory_point,
            })
            .collect(),
        dropped: dropped.to_vec(),
    };
    write_json(&dir.join(SIDECAR), &sidecar)
}

pub fn read_sidecar(dir: &Path) -> Result<SequenceSidecar> {
    let path = dir.join(SIDECAR);
    if !path.is_file() {
        return Err(Error::Missing {
            path,
            what: "silhouette sidecar (run `extract` first)".into(),
        });
    }
    read_json(&path)
}

/// Reads the first `limit` frames (all when `None`).
pub fn read_sequence(dir: &Path, limit: Option<usize>) -> Result<SilhouetteSequence> {
    let side = read_sidecar(dir)?;
    let take = limit.unwrap_or(usize::MAX);
    let frames = side
        .frames
        .iter()
        .take(take)
        .map(|f| {
            Ok(SilhouetteFrame {
                grid: read_mask_png(&frame_file(dir, f.frame_index))?,
                frame_index: f.frame_index,
                trajectory_point: f.trajectory_point,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SilhouetteSequence::new(frames, side.subject_id, side.camera_id, side.video_id)?)
}

/// Training clips read from silhouette directories on demand.
#[derive(Debug, Clone)]
pub struct DiskClips {
    videos: BTreeMap<String, (PathBuf, Vec<u64>)>,
}

impl DiskClips {
    /// Indexes `root/<video_id>` for each id; ids without a sidecar are left
    /// out.
    pub fn open<'a>(root: &Path, video_ids: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut videos = BTreeMap::new();
        for id in video_ids {
            let dir = root.join(id);
            if !dir.join(SIDECAR).is_file() {
                continue;
            }
            let side = read_sidecar(&dir)?;
            videos.insert(id.to_string(), (dir, side.frames.iter().map(|f| f.frame_index).collect()));
        }
        Ok(Self { videos })
    }

    pub fn frame_counts(&self) -> BTreeMap<String, usize> {
        self.videos.iter().map(|(k, v)| (k.clone(), v.1.len())).collect()
    }
}

impl ClipSource for DiskClips {
    fn planes(&self, video_id: &str, positions: &[usize], size: usize) -> gaitkit_core::Result<Vec<f32>> {
        let (dir, frames) = self
            .videos
            .get(video_id)
            .ok_or_else(|| gaitkit_core::Error::Manifest(format!("no silhouettes for video `{video_id}`")))?;
        let mut out = Vec::with_capacity(positions.len() * size * size);
        for &p in positions {
            let index = *frames
                .get(p)
                .ok_or_else(|| gaitkit_core::Error::SequenceTooShort(format!("{video_id} has no frame {p}")))?;
            let mask = read_mask_png(&frame_file(dir, index)).map_err(|e| gaitkit_core::Error::State(e.to_string()))?;
            out.extend(frame_input::<f32>(&mask, size));
        }
        Ok(out)
    }
}
