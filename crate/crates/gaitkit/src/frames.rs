//! Raw video input. A video is a directory of image files whose stems are
//! frame numbers (`0.png`, `000017.jpg`, ...). Other containers can be
//! supported by implementing [`FrameSource`].

use std::fs;
use std::path::{Path, PathBuf};

use gaitkit_core::image::Image;

use crate::error::IoContext;
use crate::io::read_rgb;
use crate::{Error, Result};

/// Decoded frames in increasing frame order.
pub trait FrameSource {
    /// Next `(frame_index, rgb_frame)`, or `None` at the end.
    fn next_frame(&mut self) -> Option<Result<(u64, Image<u8>)>>;
}

/// Frames stored as numbered image files in one directory.
#[derive(Debug, Clone)]
pub struct ImageDirSource {
    files: Vec<(u64, PathBuf)>,
    next: usize,
}

impl ImageDirSource {
    /// Files whose stem is not a number are ignored.
    pub fn open(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::Missing {
                path: dir.to_path_buf(),
                what: "video frame directory".into(),
            });
        }
        let mut files = numbered_files(dir, None)?;
        if files.is_empty() {
            return Err(Error::Missing {
                path: dir.to_path_buf(),
                what: "numbered frame images".into(),
            });
        }
        files.sort();
        Ok(Self { files, next: 0 })
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }
}

impl FrameSource for ImageDirSource {
    fn next_frame(&mut self) -> Option<Result<(u64, Image<u8>)>> {
        let (index, path) = self.files.get(self.next)?;
        self.next += 1;
        Some(read_rgb(path).map(|img| (*index, img)))
    }
}

/// `(number, path)` for files in `dir` named `<number>.<ext>`, optionally
/// restricted to one extension. Unsorted.
pub fn numbered_files(dir: &Path, extension: Option<&str>) -> Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).at(dir)? {
        let path = entry.at(dir)?.path();
        if !path.is_file() {
            continue;
        }
        if let Some(ext) = extension {
            if path.extension().and_then(|e| e.to_str()) != Some(ext) {
                continue;
            }
        }
        if let Some(n) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<u64>().ok()) {
            out.push((n, path));
        }
    }
    Ok(out)
}

/// Opens the frames of `video_id` under `root`: the directory
/// `root/<video_id>`.
pub fn open_video(root: &Path, video_id: &str) -> Result<Box<dyn FrameSource + Send>> {
    let dir = root.join(video_id);
    if dir.is_dir() {
        return Ok(Box::new(ImageDirSource::open(&dir)?));
    }
    Err(Error::Missing {
        path: dir,
        what: format!("frames of video `{video_id}` (a directory of numbered images)"),
    })
}
