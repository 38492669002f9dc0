//! Training-clip sampling: independent random frames, or unions of strided
//! random tracklets.
//!
//! Frame ordinals are 1-based throughout, `1..=n`.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ClipStructure {
    RandomFrames { m: usize },
    /// `step` is the stride actually used; it is below the requested stride
    /// only for short sequences. `cyclic` marks sequences shorter than one
    /// tracklet, which are read as if repeated end to end.
    Tracklets { u: usize, l: usize, step: usize, cyclic: bool },
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SampledClip {
    /// Ordinals in `1..=source_length`.
    pub indices: Vec<usize>,
    pub structure: ClipStructure,
    pub source_length: usize,
}

impl SampledClip {
    /// Zero-based positions into the sequence.
    pub fn positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().map(|&i| i - 1)
    }
}

pub fn random_frames<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<SampledClip> {
    if n == 0 {
        return Err(Error::SequenceTooShort("empty sequence".into()));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("sample count must be positive".into()));
    }
    Ok(SampledClip {
        indices: (0..m).map(|_| rng.random_range(1..=n)).collect(),
        structure: ClipStructure::RandomFrames { m },
        source_length: n,
    })
}

/// Largest valid start ordinal for a tracklet of `l` frames with stride `s`.
/// The strict variant is clamped to 1 so a valid start always exists.
pub fn max_start(n: usize, l: usize, s: usize, strict_paper_bound: bool) -> usize {
    let derived = n - (l - 1) * s;
    if strict_paper_bound {
        (n + 2).saturating_sub(l * s + s).clamp(1, derived)
    } else {
        derived
    }
}

/// Stride to use on a sequence of length `n`, and whether it must wrap.
fn effective_step(n: usize, l: usize, s: usize) -> (usize, bool) {
    if (l - 1) * s < n {
        (s, false)
    } else if n >= l {
        ((n - 1) / (l - 1), false)
    } else {
        (1, true)
    }
}

fn check(n: usize, u: usize, l: usize, s: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::SequenceTooShort("empty sequence".into()));
    }
    if u == 0 || l == 0 || s == 0 {
        return Err(Error::InvalidParameter(format!("tracklet parameters must be positive (u={u}, l={l}, s={s})")));
    }
    Ok(())
}

fn push_tracklet<R: Rng + ?Sized>(out: &mut Vec<usize>, n: usize, l: usize, step: usize, cyclic: bool, strict: bool, rng: &mut R) {
    if cyclic {
        let r = rng.random_range(0..n);
        out.extend((0..l).map(|i| (r + i) % n + 1));
    } else {
        let r = rng.random_range(1..=max_start(n, l, step, strict));
        out.extend((0..l).map(|i| r + i * step));
    }
}

pub fn random_tracklet<R: Rng + ?Sized>(n: usize, l: usize, s: usize, strict_paper_bound: bool, rng: &mut R) -> Result<SampledClip> {
    random_tracklets(n, 1, l, s, strict_paper_bound, rng)
}

/// Concatenation of `u` independently started tracklets; they may overlap.
pub fn random_tracklets<R: Rng + ?Sized>(
    n: usize,
    u: usize,
    l: usize,
    s: usize,
    strict_paper_bound: bool,
    rng: &mut R,
) -> Result<SampledClip> {
    check(n, u, l, s)?;
    let (step, cyclic) = effective_step(n, l, s);
    let mut indices = Vec::with_capacity(u * l);
    for _ in 0..u {
        push_tracklet(&mut indices, n, l, step, cyclic, strict_paper_bound, rng);
    }
    Ok(SampledClip {
        indices,
        structure: ClipStructure::Tracklets { u, l, step, cyclic },
        source_length: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SamplingMode {
    /// Random frames.
    Rf,
    /// Random tracklets.
    Rt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SamplingConfig {
    pub mode: SamplingMode,
    pub m: usize,
    pub u: usize,
    pub l: usize,
    pub s: usize,
    pub strict_paper_bound: bool,
    /// Frames fed per sequence at evaluation time.
    pub test_max_frames: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            mode: SamplingMode::Rt,
            m: 28,
            u: 4,
            l: 7,
            s: 6,
            strict_paper_bound: false,
            test_max_frames: 720,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.u == 0 || self.l == 0 || self.s == 0 || self.test_max_frames == 0 {
            return Err(Error::InvalidParameter("sampling counts must be positive".into()));
        }
        if self.mode == SamplingMode::Rt && self.u * self.l != self.m {
            return Err(Error::InvalidParameter(format!(
                "tracklet sampling needs u*l = m, got {}*{} != {}",
                self.u, self.l, self.m
            )));
        }
        Ok(())
    }

    /// Frames per training clip.
    pub fn clip_len(&self) -> usize {
        match self.mode {
            SamplingMode::Rf => self.m,
            SamplingMode::Rt => self.u * self.l,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<SampledClip> {
        match self.mode {
            SamplingMode::Rf => random_frames(n, self.m, rng),
            SamplingMode::Rt => random_tracklets(n, self.u, self.l, self.s, self.strict_paper_bound, rng),
        }
    }

    /// Zero-based positions fed at evaluation: every frame, up to the cap.
    pub fn test_positions(&self, n: usize) -> core::ops::Range<usize> {
        0..n.min(self.test_max_frames)
    }
}
