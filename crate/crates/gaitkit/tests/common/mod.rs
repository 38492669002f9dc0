//! Synthetic videos with known foreground for pipeline tests.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use gaitkit::io::write_image_png;
use gaitkit_core::image::{Image, Mask};
use serde_json::{json, Value};

pub const WIDTH: usize = 96;
pub const HEIGHT: usize = 72;
pub const KEYFRAME_STRIDE: u64 = 5;

/// Frames, per-frame ground-truth masks and `(frame, x, y, w, h)` boxes of
/// the moving object taken every `KEYFRAME_STRIDE` frames.
pub struct Video {
    pub frames: Vec<Image<u8>>,
    pub truth: Vec<Mask>,
    pub keyframes: Vec<(u64, f64, f64, f64, f64)>,
}

fn noise(x: usize, y: usize, t: usize) -> i32 {
    let h = (x as u32).wrapping_mul(73_856_093) ^ (y as u32).wrapping_mul(19_349_663) ^ (t as u32).wrapping_mul(83_492_791);
    (h.wrapping_mul(2_654_435_761) >> 29) as i32 - 3
}

fn background(x: usize, y: usize, c: usize) -> i32 {
    [70, 90, 60][c] + ((x * 7 + y * 13) % 17) as i32
}

const FOREGROUND: [i32; 3] = [210, 60, 50];

/// Paints `truth` over the textured background with small per-frame noise.
fn render(truth: &Mask, t: usize) -> Image<u8> {
    Image::from_fn(WIDTH, HEIGHT, 3, |x, y, c| {
        let base = if truth.get(x, y, 0) != 0 { FOREGROUND[c] } else { background(x, y, c) };
        (base + noise(x, y, t * 3 + c)).clamp(0, 255) as u8
    })
}

fn bounding_box(m: &Mask) -> Option<(f64, f64, f64, f64)> {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..m.height() {
        for x in 0..m.width() {
            if m.get(x, y, 0) != 0 {
                (x0, y0, x1, y1) = (x0.min(x), y0.min(y), x1.max(x), y1.max(y));
            }
        }
    }
    (x0 != usize::MAX).then(|| {
        let (w, h) = ((x1 - x0 + 1) as f64, (y1 - y0 + 1) as f64);
        (x0 as f64 + w / 2.0, y0 as f64 + h / 2.0, w, h)
    })
}

fn fill(m: &mut Mask, x0: i64, y0: i64, w: i64, h: i64) {
    for y in y0.max(0)..(y0 + h).min(HEIGHT as i64) {
        for x in x0.max(0)..(x0 + w).min(WIDTH as i64) {
            m.set(x as usize, y as usize, 0, 1);
        }
    }
}

fn assemble(truths: Vec<Mask>, lead_in: usize) -> Video {
    let frames = truths.iter().enumerate().map(|(t, m)| render(m, t)).collect();
    let keyframes = truths
        .iter()
        .enumerate()
        .skip(lead_in)
        .filter(|(t, _)| *t as u64 % KEYFRAME_STRIDE == 0)
        .filter_map(|(t, m)| bounding_box(m).map(|(x, y, w, h)| (t as u64, x, y, w, h)))
        .collect();
    Video { frames, truth: truths, keyframes }
}

/// `warmup` frames of empty background, then a 16-pixel square drifting
/// right by one pixel per frame for `moving` frames.
pub fn square_video(warmup: usize, moving: usize) -> Video {
    let truths = (0..warmup + moving)
        .map(|t| {
            let mut m = Mask::new(WIDTH, HEIGHT, 1);
            if t >= warmup {
                fill(&mut m, 4 + (t - warmup) as i64, 28, 16, 16);
            }
            m
        })
        .collect();
    assemble(truths, warmup)
}

/// Body proportions and leg swing that tell identities apart.
#[derive(Debug, Clone, Copy)]
pub struct Walker {
    pub head: i64,
    pub torso_w: i64,
    pub torso_h: i64,
    pub leg_h: i64,
    pub swing: f64,
    pub period: f64,
}

pub fn walker(identity: usize) -> Walker {
    let i = identity as i64;
    Walker {
        head: 5 + i % 3,
        torso_w: 6 + 3 * (i % 4),
        torso_h: 16 + 2 * (i % 3),
        leg_h: 18 - 2 * (i % 3),
        swing: 2.0 + (identity % 4) as f64 * 1.5,
        period: 8.0 + (identity % 3) as f64 * 3.0,
    }
}

/// `lead_in` frames of empty background, then the walker crossing the frame
/// left to right over `steps` frames; `phase` shifts its gait cycle.
pub fn walk_video(w: Walker, lead_in: usize, steps: usize, phase: f64) -> Video {
    walk_video_carrying(w, lead_in, steps, phase, false)
}

/// As [`walk_video`], optionally with a bag hanging at the front of the torso.
pub fn walk_video_carrying(w: Walker, lead_in: usize, steps: usize, phase: f64, bag: bool) -> Video {
    let truths = (0..lead_in + steps)
        .map(|t| {
            let mut m = Mask::new(WIDTH, HEIGHT, 1);
            if t >= lead_in {
                let s = (t - lead_in) as f64;
                let cx = 14 + ((t - lead_in) as i64 * 64) / steps as i64;
                let top = 6;
                fill(&mut m, cx - w.head / 2, top, w.head, w.head);
                let torso_y = top + w.head;
                fill(&mut m, cx - w.torso_w / 2, torso_y, w.torso_w, w.torso_h);
                if bag {
                    fill(&mut m, cx + w.torso_w / 2, torso_y + w.torso_h / 2, 10, 12);
                }
                let legs_y = torso_y + w.torso_h;
                let offset = (w.swing * (std::f64::consts::TAU * s / w.period + phase).sin()).round() as i64;
                fill(&mut m, cx - 3 + offset, legs_y, 3, w.leg_h);
                fill(&mut m, cx - offset, legs_y, 3, w.leg_h);
            }
            m
        })
        .collect();
    assemble(truths, lead_in)
}

pub fn write_frames(dir: &Path, video: &Video) {
    for (t, f) in video.frames.iter().enumerate() {
        write_image_png(&dir.join(format!("{t:05}.png")), f).unwrap();
    }
}

pub fn record(subject: &str, camera: u32, video_id: &str, video: &Video) -> Value {
    json!({
        "subject_id": subject,
        "camera_id": camera,
        "video_id": video_id,
        "frame_range": [0, video.frames.len() - 1],
        "keyframes": video.keyframes.iter().map(|&(frame, x, y, w, h)| json!({"frame": frame, "x": x, "y": y, "w": w, "h": h})).collect::<Vec<_>>(),
    })
}

/// Video frames under `root/videos` and `root/manifest.json` for `train`
/// and `test` identities, each walked once per camera.
pub struct Corpus {
    pub root: PathBuf,
    pub manifest: PathBuf,
    pub videos: PathBuf,
    pub video_ids: Vec<String>,
}

pub fn write_corpus(root: &Path, train: usize, test: usize, cameras: u32, steps: usize) -> Corpus {
    let videos = root.join("videos");
    let mut records = Vec::new();
    let mut split = serde_json::Map::new();
    let mut ids = Vec::new();
    for identity in 0..train + test {
        let subject = format!("{identity:04}");
        split.insert(subject.clone(), json!(if identity < train { "train" } else { "test" }));
        for cam in 1..=cameras {
            let id = format!("c{cam}_{subject}");
            let video = walk_video(walker(identity), 10, steps, cam as f64);
            let dir = videos.join(&id);
            fs::create_dir_all(&dir).unwrap();
            write_frames(&dir, &video);
            records.push(record(&subject, cam, &id, &video));
            ids.push(id);
        }
    }
    let manifest = root.join("manifest.json");
    let doc = json!({"keyframe_stride": KEYFRAME_STRIDE, "records": records, "split": split});
    fs::write(&manifest, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    Corpus {
        root: root.to_path_buf(),
        manifest,
        videos,
        video_ids: ids,
    }
}

pub fn iou(a: &Mask, b: &Mask) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.data().iter().zip(b.data()) {
        let (x, y) = (*x != 0, *y != 0);
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Every file under `dir` with its bytes, sorted by relative path.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(base, &path, out);
            } else {
                out.push((path.strip_prefix(base).unwrap().display().to_string(), fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

/// Tiny low-resolution network and short training schedule.
pub const TINY: &[&str] = &[
    "model.input_size=64",
    "model.use_alignment=false",
    "model.block23_stride=1",
    "model.channel_scale=0.25",
    "model.embed_dim=8",
    "model.pyramid_u=2",
    "model.pyramid_v=2",
    "sampling.m=8",
    "sampling.u=2",
    "sampling.l=4",
    "sampling.s=2",
    "training.p=2",
    "training.k=2",
    "training.phases=[[0.001, 6]]",
    "training.checkpoint_every=2",
    "training.log_every=1",
];
