//! File formats, configuration and the command line around `gaitkit-core`.
//!
//! On-disk layout:
//!
//! * manifest: one JSON file (`manifest_io`).
//! * source videos: `<videos>/<video_id>/` holding numbered image files.
//! * silhouettes: `<out>/<video_id>/<frame>.png` (8-bit, 0 or 255) plus
//!   `sequence.json`; composed input variants go to `variant/`.
//! * GEIs: 16-bit PNGs plus `gei.json` per video.
//! * checkpoints: `<run>/ckpt_<iteration>/model.gaitckpt`, with `latest`
//!   naming the newest and `metrics.log` holding the loss curve.
//! * embeddings: `index.json` plus one little-endian `f32` file per video.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
mod error;
pub mod frames;
pub mod io;
pub mod manifest_io;
pub mod sequence_io;
pub mod store;

pub use error::{Error, Result};
