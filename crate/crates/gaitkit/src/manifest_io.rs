//! The JSON manifest file.
//!
//! ```json
//! {
//!   "keyframe_stride": 5,
//!   "records": [{"subject_id": "0001", "camera_id": 1, "video_id": "c1_0001",
//!                "frame_range": [0, 120],
//!                "keyframes": [{"frame": 0, "x": 320.0, "y": 200.0, "w": 40.0, "h": 110.0}]}],
//!   "split": {"0001": "train"},
//!   "probe_overrides": {"0002": "c3_0002"}
//! }
//! ```
//!
//! `probe_overrides` is optional and fixes the multi-scene probe video of
//! the listed test subjects.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use gaitkit_core::manifest::{BoundingBox, DatasetManifest, ProtocolOptions, Split, VideoRecord};
use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::IoContext;
use crate::io::write_json;
use crate::Result;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyframeEntry {
    frame: u64,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordEntry {
    subject_id: String,
    camera_id: u32,
    video_id: String,
    frame_range: (u64, u64),
    keyframes: Vec<KeyframeEntry>,
}

/// Object entries in document order, duplicates kept.
#[derive(Debug, Clone, Default)]
struct SplitEntries(Vec<(String, Split)>);

impl<'de> Deserialize<'de> for SplitEntries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct Entries;
        impl<'de> Visitor<'de> for Entries {
            type Value = SplitEntries;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object mapping subject ids to \"train\" or \"test\"")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some(entry) = map.next_entry::<String, Split>()? {
                    out.push(entry);
                }
                Ok(SplitEntries(out))
            }
        }
        d.deserialize_map(Entries)
    }
}

impl Serialize for SplitEntries {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_map(self.0.iter().map(|(k, v)| (k, v)))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    keyframe_stride: u32,
    records: Vec<RecordEntry>,
    split: SplitEntries,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    probe_overrides: BTreeMap<String, String>,
}

/// A validated manifest and the protocol options stored alongside it.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub manifest: DatasetManifest,
    pub protocol: ProtocolOptions,
}

pub fn parse_manifest(text: &str, origin: &Path) -> Result<LoadedManifest> {
    let file: ManifestFile = serde_json::from_str(text).at(origin)?;
    let records = file
        .records
        .into_iter()
        .map(|r| {
            let keyframes = r
                .keyframes
                .iter()
                .map(|k| BoundingBox::new(k.x, k.y, k.w, k.h, k.frame))
                .collect::<gaitkit_core::Result<Vec<_>>>()?;
            Ok(VideoRecord {
                subject_id: r.subject_id,
                camera_id: r.camera_id,
                video_id: r.video_id,
                frame_range: r.frame_range,
                keyframes,
            })
        })
        .collect::<gaitkit_core::Result<Vec<_>>>()?;
    Ok(LoadedManifest {
        manifest: DatasetManifest::new(file.keyframe_stride, records, file.split.0)?,
        protocol: ProtocolOptions {
            probe_overrides: file.probe_overrides,
        },
    })
}

pub fn load_manifest(path: &Path) -> Result<LoadedManifest> {
    let text = std::fs::read_to_string(path).at(path)?;
    parse_manifest(&text, path)
}

pub fn save_manifest(path: &Path, manifest: &DatasetManifest, protocol: &ProtocolOptions) -> Result<()> {
    let file = ManifestFile {
        keyframe_stride: manifest.keyframe_stride(),
        records: manifest
            .records()
            .iter()
            .map(|r| RecordEntry {
                subject_id: r.subject_id.clone(),
                camera_id: r.camera_id,
                video_id: r.video_id.clone(),
                frame_range: r.frame_range,
                keyframes: r
                    .keyframes
                    .iter()
                    .map(|b| KeyframeEntry {
                        frame: b.frame_index,
                        x: b.x_center,
                        y: b.y_center,
                        w: b.width,
                        h: b.height,
                    })
                    .collect(),
            })
            .collect(),
        split: SplitEntries(manifest.split().iter().map(|(k, v)| (k.clone(), *v)).collect()),
        probe_overrides: protocol.probe_overrides.clone(),
    };
    write_json(path, &file)
}
