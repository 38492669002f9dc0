//! From raw frames and sparse boxes to normalised binary silhouettes.

mod boxes;
mod gmm;
mod normalize;
mod variant;

use alloc::string::String;
use alloc::vec::Vec;
use alloc::format;

pub use boxes::{crop, ensure_same_dims, expand_box, interpolate_boxes, pixel_rect, HEIGHT_EXPANSION, WIDTH_EXPANSION};
pub use gmm::{gmm_subtract, BackgroundSubtractor, GmmParams, Morphology};
pub use normalize::{
    apply_geometry, median_column, normalize_silhouette, vertical_extent, NormalizeGeometry, Normalized,
    CENTER_COLUMN, SILHOUETTE_SIZE,
};
pub use variant::{compose_variant, luminance, quantize_level, BackgroundMode, Composite, InputVariant, PedestrianMode};

use crate::image::{Image, Mask};
use crate::manifest::VideoRecord;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ForegroundMask {
    pub mask: Mask,
    pub frame_index: u64,
}

/// One normalised 224x224 0/1 silhouette and the pedestrian's box center in
/// source pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteFrame {
    pub grid: Mask,
    pub frame_index: u64,
    pub trajectory_point: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteSequence {
    frames: Vec<SilhouetteFrame>,
    pub subject_id: String,
    pub camera_id: u32,
    pub video_id: String,
}

impl SilhouetteSequence {
    pub fn new(frames: Vec<SilhouetteFrame>, subject_id: String, camera_id: u32, video_id: String) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptyInput("silhouette sequence"));
        }
        if frames.windows(2).any(|w| w[0].frame_index >= w[1].frame_index) {
            return Err(Error::InvalidParameter(format!(
                "frame indices of `{video_id}` are not strictly increasing"
            )));
        }
        let dims = frames[0].grid.dims();
        if frames.iter().any(|f| f.grid.dims() != dims || f.grid.channels() != 1) {
            return Err(Error::DimensionMismatch(format!("frames of `{video_id}` differ in size")));
        }
        Ok(Self {
            frames,
            subject_id,
            camera_id,
            video_id,
        })
    }

    pub fn frames(&self) -> &[SilhouetteFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_indices(&self) -> Vec<u64> {
        self.frames.iter().map(|f| f.frame_index).collect()
    }

    pub fn trajectory(&self) -> Vec<(f64, f64)> {
        self.frames.iter().map(|f| f.trajectory_point).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DropReason {
    EmptyMask,
    BoxOutsideFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DroppedFrame {
    pub frame_index: u64,
    pub reason: DropReason,
}

/// Result of feeding one frame to a [`SilhouetteExtractor`].
#[derive(Debug, Clone, PartialEq)]
pub enum FrameOutcome {
    /// Frame is outside the annotated span; it only trained the background.
    Skipped,
    Dropped(DroppedFrame),
    Kept {
        frame: SilhouetteFrame,
        /// Normalised appearance variant, when one other than the plain
        /// silhouette was requested.
        variant: Option<Image<u8>>,
    },
}

/// Streaming per-video extraction: background subtraction over every frame,
/// then box interpolation, enlargement, cropping and normalisation for frames
/// inside the keyframe span.
#[derive(Debug, Clone)]
pub struct SilhouetteExtractor {
    record: VideoRecord,
    variant: InputVariant,
    subtractor: BackgroundSubtractor,
    kept: Vec<SilhouetteFrame>,
    dropped: Vec<DroppedFrame>,
}

impl SilhouetteExtractor {
    pub fn new(record: VideoRecord, params: GmmParams, variant: InputVariant) -> Result<Self> {
        record.validate()?;
        variant.validate()?;
        Ok(Self {
            record,
            variant,
            subtractor: BackgroundSubtractor::new(params)?,
            kept: Vec::new(),
            dropped: Vec::new(),
        })
    }

    pub fn push(&mut self, frame_index: u64, frame: &Image<u8>) -> Result<FrameOutcome> {
        let mask = self.subtractor.apply(frame)?;
        let (first, last) = self.record.keyframe_span();
        let (start, end) = self.record.frame_range;
        if frame_index < first.max(start) || frame_index > last.min(end) {
            return Ok(FrameOutcome::Skipped);
        }
        let bbox = interpolate_boxes(&self.record.keyframes, frame_index)?;
        let grown = expand_box(&bbox);
        let drop = |reason| DroppedFrame { frame_index, reason };
        let mask_crop = match crop(&mask, &grown) {
            Ok(c) => c,
            Err(Error::NoOverlap) => {
                self.dropped.push(drop(DropReason::BoxOutsideFrame));
                return Ok(FrameOutcome::Dropped(drop(DropReason::BoxOutsideFrame)));
            }
            Err(e) => return Err(e),
        };
        let normalized = match normalize_silhouette(&mask_crop, frame_index, bbox.center()) {
            Ok(n) => n,
            Err(Error::EmptyMask) => {
                self.dropped.push(drop(DropReason::EmptyMask));
                return Ok(FrameOutcome::Dropped(drop(DropReason::EmptyMask)));
            }
            Err(e) => return Err(e),
        };
        let variant = if self.variant == InputVariant::SILHOUETTE {
            None
        } else {
            let color_crop = crop(frame, &grown)?;
            let composed = compose_variant(&color_crop, &mask_crop, self.variant)?;
            let img = match composed {
                Composite::Binary(m) => m.mask_to_u8(),
                Composite::Color(i) | Composite::Gray(i) => i,
            };
            Some(apply_geometry(&img, &normalized.geometry))
        };
        self.kept.push(normalized.frame.clone());
        Ok(FrameOutcome::Kept {
            frame: normalized.frame,
            variant,
        })
    }

    pub fn dropped(&self) -> &[DroppedFrame] {
        &self.dropped
    }

    /// Consumes the extractor. Fails when every annotated frame was dropped.
    pub fn finish(self) -> Result<(SilhouetteSequence, Vec<DroppedFrame>)> {
        let r = self.record;
        let seq = SilhouetteSequence::new(self.kept, r.subject_id, r.camera_id, r.video_id)?;
        Ok((seq, self.dropped))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::BoundingBox;
    use alloc::vec;

    fn frame_with_block(x0: usize) -> Image<u8> {
        Image::from_fn(80, 60, 3, |x, y, _| if (x0..x0 + 10).contains(&x) && (20..50).contains(&y) { 250 } else { 30 })
    }

    #[test]
    fn extractor_keeps_frames_in_span_and_drops_empty_ones() {
        let record = VideoRecord {
            subject_id: "s".into(),
            camera_id: 1,
            video_id: "v".into(),
            frame_range: (0, 40),
            keyframes: vec![
                BoundingBox::new(25.0, 35.0, 12.0, 34.0, 30).unwrap(),
                BoundingBox::new(35.0, 35.0, 12.0, 34.0, 35).unwrap(),
            ],
        };
        let mut ex = SilhouetteExtractor::new(record, GmmParams::default(), InputVariant::SILHOUETTE).unwrap();
        let mut kept = 0;
        for i in 0..=40u64 {
            // a static background until frame 30, then a block moving 2 px/frame
            let f = if i < 30 {
                Image::from_fn(80, 60, 3, |_, _, _| 30u8)
            } else {
                frame_with_block(20 + 2 * (i as usize - 30))
            };
            match ex.push(i, &f).unwrap() {
                FrameOutcome::Kept { frame, variant } => {
                    kept += 1;
                    assert!(variant.is_none());
                    assert_eq!(frame.grid.dims(), (SILHOUETTE_SIZE, SILHOUETTE_SIZE));
                }
                FrameOutcome::Dropped(_) => {}
                FrameOutcome::Skipped => assert!(!(30..=35).contains(&i)),
            }
        }
        assert_eq!(kept, 6);
        let (seq, dropped) = ex.finish().unwrap();
        assert_eq!(seq.len(), 6);
        assert!(dropped.is_empty());
        assert_eq!(seq.frames()[0].trajectory_point, (25.0, 35.0));
    }

    #[test]
    fn sequence_rejects_unordered_frames() {
        let f = |i| SilhouetteFrame {
            grid: Image::new(4, 4, 1),
            frame_index: i,
            trajectory_point: (0.0, 0.0),
        };
        assert!(SilhouetteSequence::new(vec![f(2), f(1)], "s".into(), 1, "v".into()).is_err());
        assert!(SilhouetteSequence::new(vec![], "s".into(), 1, "v".into()).is_err());
        assert!(SilhouetteSequence::new(vec![f(1), f(2)], "s".into(), 1, "v".into()).is_ok());
    }
}
