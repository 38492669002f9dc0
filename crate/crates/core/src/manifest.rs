//! Dataset model: subjects, cameras, videos with sparse keyframe boxes, the
//! train/test split, and the probe/gallery assignments of each protocol.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::{Error, Result};

/// Default spacing of annotated keyframes.
pub const DEFAULT_KEYFRAME_STRIDE: u32 = 5;

/// Axis-aligned pedestrian box in source pixels; `(x_center, y_center)` is the
/// box center.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundingBox {
    pub x_center: f64,
    pub y_center: f64,
    pub width: f64,
    pub height: f64,
    pub frame_index: u64,
}

impl BoundingBox {
    pub fn new(x_center: f64, y_center: f64, width: f64, height: f64, frame_index: u64) -> Result<Self> {
        let b = Self {
            x_center,
            y_center,
            width,
            height,
            frame_index,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_center.is_finite() && self.y_center.is_finite()) {
            return Err(Error::InvalidBox(format!("non-finite center at frame {}", self.frame_index)));
        }
        if !(self.width.is_finite() && self.width > 0.0 && self.height.is_finite() && self.height > 0.0) {
            return Err(Error::InvalidBox(format!(
                "size {}x{} at frame {} must be positive",
                self.width, self.height, self.frame_index
            )));
        }
        Ok(())
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x_center, self.y_center)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Split {
    Train,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Manifest(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub subject_id: String,
    pub camera_id: u32,
    pub video_id: String,
    /// Inclusive `[start, end]` frame ordinals.
    pub frame_range: (u64, u64),
    pub keyframes: Vec<BoundingBox>,
}

impl VideoRecord {
    pub fn validate(&self) -> Result<()> {
        if self.video_id.is_empty() || self.subject_id.is_empty() {
            return Err(Error::Manifest("empty subject or video id".into()));
        }
        let (start, end) = self.frame_range;
        if start > end {
            return Err(Error::Manifest(format!(
                "video `{}` has frame range [{start}, {end}]",
                self.video_id
            )));
        }
        if self.keyframes.is_empty() {
            return Err(Error::Manifest(format!("video `{}` has no keyframes", self.video_id)));
        }
        for b in &self.keyframes {
            b.validate()?;
            if b.frame_index < start || b.frame_index > end {
                return Err(Error::Manifest(format!(
                    "video `{}` keyframe {} outside frame range [{start}, {end}]",
                    self.video_id, b.frame_index
                )));
            }
        }
        if self.keyframes.windows(2).any(|w| w[0].frame_index >= w[1].frame_index) {
            return Err(Error::KeyframesNotSorted(self.video_id.clone()));
        }
        Ok(())
    }

    /// First and last annotated frame.
    pub fn keyframe_span(&self) -> (u64, u64) {
        (self.keyframes[0].frame_index, self.keyframes[self.keyframes.len() - 1].frame_index)
    }
}

/// Validated dataset index. Read-only once built.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    keyframe_stride: u32,
    records: Vec<VideoRecord>,
    split: BTreeMap<String, Split>,
}

impl DatasetManifest {
    /// Builds and validates a manifest. `split` is taken as a list so that a
    /// subject listed twice can be reported rather than silently merged.
    pub fn new(keyframe_stride: u32, records: Vec<VideoRecord>, split: Vec<(String, Split)>) -> Result<Self> {
        if keyframe_stride == 0 {
            return Err(Error::Manifest("keyframe_stride must be positive".into()));
        }
        let mut map = BTreeMap::new();
        for (subject, s) in split {
            if map.insert(subject.clone(), s).is_some() {
                return Err(Error::SplitConflict(subject));
            }
        }
        let mut seen = BTreeSet::new();
        for r in &records {
            r.validate()?;
            if !seen.insert(r.video_id.as_str()) {
                return Err(Error::DuplicateVideo(r.video_id.clone()));
            }
            if !map.contains_key(&r.subject_id) {
                return Err(Error::Manifest(format!(
                    "subject `{}` of video `{}` has no split assignment",
                    r.subject_id, r.video_id
                )));
            }
        }
        for (subject, s) in &map {
            if *s == Split::Test && !records.iter().any(|r| &r.subject_id == subject) {
                return Err(Error::Manifest(format!("test subject `{subject}` has no videos")));
            }
        }
        Ok(Self {
            keyframe_stride,
            records,
            split: map,
        })
    }

    pub fn keyframe_stride(&self) -> u32 {
        self.keyframe_stride
    }

    pub fn records(&self) -> &[VideoRecord] {
        &self.records
    }

    pub fn split(&self) -> &BTreeMap<String, Split> {
        &self.split
    }

    pub fn split_of(&self, subject: &str) -> Option<Split> {
        self.split.get(subject).copied()
    }

    pub fn record(&self, video_id: &str) -> Option<&VideoRecord> {
        self.records.iter().find(|r| r.video_id == video_id)
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &VideoRecord> {
        self.records
            .iter()
            .filter(move |r| self.split.get(&r.subject_id) == Some(&split))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Protocol {
    MultiScene,
    CrossScene,
    OpenSetCrossScene,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::MultiScene => "multi_scene",
            Protocol::CrossScene => "cross_scene",
            Protocol::OpenSetCrossScene => "open_set_cross_scene",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multi_scene" => Ok(Protocol::MultiScene),
            "cross_scene" => Ok(Protocol::CrossScene),
            "open_set_cross_scene" | "open_set" => Ok(Protocol::OpenSetCrossScene),
            other => Err(Error::UnknownProtocol(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VideoRef {
    pub subject_id: String,
    pub video_id: String,
    pub camera_id: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProbeEntry {
    pub video: VideoRef,
    /// True when the probe subject has no video in this spec's gallery
    /// (an imposter in the open-set protocol).
    pub imposter: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProbeGallerySpec {
    pub protocol: Protocol,
    pub probe: Vec<ProbeEntry>,
    pub gallery: Vec<VideoRef>,
    /// `(probe_camera, gallery_camera)` for the cross-scene protocols.
    pub scene_pair: Option<(u32, u32)>,
}

impl ProbeGallerySpec {
    pub fn genuine_count(&self) -> usize {
        self.probe.iter().filter(|p| !p.imposter).count()
    }

    pub fn imposter_count(&self) -> usize {
        self.probe.iter().filter(|p| p.imposter).count()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProtocolOptions {
    /// Explicit multi-scene probe video per subject, overriding the default
    /// smallest `(camera_id, video_id)` rule.
    pub probe_overrides: BTreeMap<String, String>,
}

fn video_ref(r: &VideoRecord) -> VideoRef {
    VideoRef {
        subject_id: r.subject_id.clone(),
        video_id: r.video_id.clone(),
        camera_id: r.camera_id,
    }
}

/// Materialises the probe/gallery assignment(s) of `protocol` over the test
/// split. Output order is deterministic: specs by `(probe_camera,
/// gallery_camera)`, entries by `(camera_id, video_id)`.
pub fn build_probe_gallery(
    manifest: &DatasetManifest,
    protocol: Protocol,
    options: &ProtocolOptions,
) -> Result<Vec<ProbeGallerySpec>> {
    let mut test: Vec<&VideoRecord> = manifest.records_in(Split::Test).collect();
    if test.is_empty() {
        return Err(Error::EmptyTestSplit);
    }
    test.sort_by(|a, b| (a.camera_id, &a.video_id).cmp(&(b.camera_id, &b.video_id)));

    match protocol {
        Protocol::MultiScene => {
            let mut probe_of: BTreeMap<&str, &str> = BTreeMap::new();
            for r in &test {
                probe_of.entry(r.subject_id.as_str()).or_insert(r.video_id.as_str());
            }
            for (subject, video) in &options.probe_overrides {
                let Some(slot) = probe_of.get_mut(subject.as_str()) else {
                    return Err(Error::Manifest(format!("probe override for unknown test subject `{subject}`")));
                };
                let ok = test.iter().any(|r| &r.subject_id == subject && &r.video_id == video);
                if !ok {
                    return Err(Error::Manifest(format!(
                        "probe override `{video}` is not a test video of subject `{subject}`"
                    )));
                }
                *slot = video.as_str();
            }
            let is_probe = |r: &VideoRecord| probe_of.get(r.subject_id.as_str()) == Some(&r.video_id.as_str());
            let gallery: Vec<VideoRef> = test.iter().filter(|r| !is_probe(r)).map(|r| video_ref(r)).collect();
            let enrolled: BTreeSet<&str> = gallery.iter().map(|g| g.subject_id.as_str()).collect();
            let probe = test
                .iter()
                .filter(|r| is_probe(r))
                .map(|r| ProbeEntry {
                    video: video_ref(r),
                    imposter: !enrolled.contains(r.subject_id.as_str()),
                })
                .collect();
            Ok(alloc::vec![ProbeGallerySpec {
                protocol,
                probe,
                gallery,
                scene_pair: None,
            }])
        }
        Protocol::CrossScene | Protocol::OpenSetCrossScene => {
            let cameras: BTreeSet<u32> = test.iter().map(|r| r.camera_id).collect();
            let mut specs = Vec::new();
            for &pc in &cameras {
                for &gc in &cameras {
                    if pc == gc {
                        continue;
                    }
                    let gallery: Vec<VideoRef> =
                        test.iter().filter(|r| r.camera_id == gc).map(|r| video_ref(r)).collect();
                    let enrolled: BTreeSet<&str> = gallery.iter().map(|g| g.subject_id.as_str()).collect();
                    let probe = test
                        .iter()
                        .filter(|r| r.camera_id == pc)
                        .map(|r| ProbeEntry {
                            video: video_ref(r),
                            imposter: !enrolled.contains(r.subject_id.as_str()),
                        })
                        .filter(|p| protocol == Protocol::OpenSetCrossScene || !p.imposter)
                        .collect();
                    specs.push(ProbeGallerySpec {
                        protocol,
                        probe,
                        gallery,
                        scene_pair: Some((pc, gc)),
                    });
                }
            }
            Ok(specs)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn kf(frame: u64) -> BoundingBox {
        BoundingBox::new(100.0, 50.0, 40.0, 110.0, frame).unwrap()
    }

    fn rec(subject: &str, camera: u32, video: &str) -> VideoRecord {
        VideoRecord {
            subject_id: subject.into(),
            camera_id: camera,
            video_id: video.into(),
            frame_range: (0, 20),
            keyframes: vec![kf(0), kf(5), kf(10)],
        }
    }

    fn split(entries: &[(&str, Split)]) -> Vec<(String, Split)> {
        entries.iter().map(|(s, p)| ((*s).into(), *p)).collect()
    }

    #[test]
    fn box_rejects_nonpositive_size() {
        assert!(BoundingBox::new(1.0, 1.0, 0.0, 5.0, 0).is_err());
        assert!(BoundingBox::new(1.0, 1.0, 5.0, -1.0, 0).is_err());
    }

    #[test]
    fn valid_manifest_round_trip() {
        let m = DatasetManifest::new(
            5,
            vec![rec("a", 1, "v1"), rec("a", 2, "v2"), rec("b", 1, "v3")],
            split(&[("a", Split::Train), ("b", Split::Test)]),
        )
        .unwrap();
        assert_eq!(m.records().len(), 3);
        assert_eq!(m.records_in(Split::Train).count(), 2);
    }

    #[test]
    fn split_conflict_is_reported() {
        let err = DatasetManifest::new(
            5,
            vec![rec("a", 1, "v1")],
            split(&[("a", Split::Train), ("a", Split::Test)]),
        )
        .unwrap_err();
        assert_eq!(err, Error::SplitConflict("a".into()));
        assert!(err.to_string().contains("split conflict"));
    }

    #[test]
    fn unsorted_keyframes_are_reported() {
        let mut r = rec("a", 1, "v1");
        r.keyframes.swap(0, 1);
        let err = DatasetManifest::new(5, vec![r], split(&[("a", Split::Test)])).unwrap_err();
        assert!(err.to_string().contains("keyframes not sorted"));
    }

    #[test]
    fn duplicate_video_is_reported() {
        let err = DatasetManifest::new(
            5,
            vec![rec("a", 1, "v1"), rec("a", 2, "v1")],
            split(&[("a", Split::Test)]),
        )
        .unwrap_err();
        assert_eq!(err, Error::DuplicateVideo("v1".into()));
    }

    #[test]
    fn keyframe_outside_range_is_rejected() {
        let mut r = rec("a", 1, "v1");
        r.keyframes.push(kf(30));
        assert!(DatasetManifest::new(5, vec![r], split(&[("a", Split::Test)])).is_err());
    }

    #[test]
    fn multi_scene_example() {
        // S1: v1, v2; S2: v3 -> probe {v1, v3}, gallery {v2}; S2 flagged.
        let m = DatasetManifest::new(
            5,
            vec![rec("S1", 1, "v1"), rec("S1", 2, "v2"), rec("S2", 3, "v3")],
            split(&[("S1", Split::Test), ("S2", Split::Test)]),
        )
        .unwrap();
        let specs = build_probe_gallery(&m, Protocol::MultiScene, &ProtocolOptions::default()).unwrap();
        assert_eq!(specs.len(), 1);
        let s = &specs[0];
        let probes: Vec<&str> = s.probe.iter().map(|p| p.video.video_id.as_str()).collect();
        assert_eq!(probes, ["v1", "v3"]);
        let gallery: Vec<&str> = s.gallery.iter().map(|g| g.video_id.as_str()).collect();
        assert_eq!(gallery, ["v2"]);
        assert!(!s.probe[0].imposter);
        assert!(s.probe[1].imposter);
    }

    #[test]
    fn probe_override_is_honoured() {
        let m = DatasetManifest::new(
            5,
            vec![rec("S1", 1, "v1"), rec("S1", 2, "v2")],
            split(&[("S1", Split::Test)]),
        )
        .unwrap();
        let mut opts = ProtocolOptions::default();
        opts.probe_overrides.insert("S1".into(), "v2".into());
        let s = &build_probe_gallery(&m, Protocol::MultiScene, &opts).unwrap()[0];
        assert_eq!(s.probe[0].video.video_id, "v2");
        assert_eq!(s.gallery[0].video_id, "v1");

        opts.probe_overrides.insert("S1".into(), "nope".into());
        assert!(build_probe_gallery(&m, Protocol::MultiScene, &opts).is_err());
    }

    #[test]
    fn eight_cameras_give_56_ordered_pairs() {
        let records = (1..=8).map(|c| rec("s", c, &alloc::format!("v{c}"))).collect();
        let m = DatasetManifest::new(5, records, split(&[("s", Split::Test)])).unwrap();
        let specs = build_probe_gallery(&m, Protocol::CrossScene, &ProtocolOptions::default()).unwrap();
        assert_eq!(specs.len(), 56);
        let pairs: BTreeSet<(u32, u32)> = specs.iter().map(|s| s.scene_pair.unwrap()).collect();
        assert_eq!(pairs.len(), 56);
    }

    #[test]
    fn open_set_flags_absent_subjects() {
        let m = DatasetManifest::new(
            5,
            vec![rec("a", 4, "v1"), rec("b", 4, "v2"), rec("b", 1, "v3")],
            split(&[("a", Split::Test), ("b", Split::Test)]),
        )
        .unwrap();
        let open = build_probe_gallery(&m, Protocol::OpenSetCrossScene, &ProtocolOptions::default()).unwrap();
        let pair = open.iter().find(|s| s.scene_pair == Some((4, 1))).unwrap();
        let a = pair.probe.iter().find(|p| p.video.subject_id == "a").unwrap();
        assert!(a.imposter);
        assert_eq!(pair.imposter_count(), 1);

        let closed = build_probe_gallery(&m, Protocol::CrossScene, &ProtocolOptions::default()).unwrap();
        let pair = closed.iter().find(|s| s.scene_pair == Some((4, 1))).unwrap();
        assert_eq!(pair.probe.len(), 1);
        assert_eq!(pair.probe[0].video.subject_id, "b");
    }

    #[test]
    fn empty_test_split_is_an_error() {
        let m = DatasetManifest::new(5, vec![rec("a", 1, "v1")], split(&[("a", Split::Train)])).unwrap();
        assert_eq!(
            build_probe_gallery(&m, Protocol::MultiScene, &ProtocolOptions::default()),
            Err(Error::EmptyTestSplit)
        );
        assert!("bogus".parse::<Protocol>().is_err());
    }
}
