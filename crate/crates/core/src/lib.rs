//! Allocation-only core of the gaitkit gait recognition toolkit.
//!
//! Everything in this crate is pure computation over in-memory buffers:
//! the dataset model and probe/gallery protocols, silhouette extraction
//! (background subtraction, box handling, normalisation, input variants),
//! gait energy images, clip sampling, the recognition network with its
//! hand-written backward passes, batch-all triplet training, and the
//! closed- and open-set evaluation metrics.
//!
//! The crate is `no_std` (it needs `alloc`). The default `std` feature only
//! switches float math and the matrix kernels to their std-backed paths.
//! File formats, configuration and the command line live in the `gaitkit`
//! crate.

#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod error;
pub mod eval;
pub mod gei;
pub mod image;
pub mod manifest;
pub mod model;
pub mod nn;
pub mod sampling;
pub mod silhouette;
pub mod training;

pub use error::{Error, Result};
