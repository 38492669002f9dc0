//! Identity-balanced batches, batch-all triplet loss over the patch vectors,
//! and an Adam loop with a piecewise-constant learning rate.

mod adam;
mod batch;
mod init;
mod loss;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use adam::Adam;
pub use batch::{pk_sample, BatchEntry, PKBatch, TrainSubject, TrainVideo, TrainingSet};
pub use init::initialize;
pub use loss::{batch_all_triplet, TripletConfig, TripletOutput};

use crate::image::Mask;
use crate::model::{frame_input, GaitNet, ModelConfig};
use crate::nn::{Module, Tensor};
use crate::sampling::SamplingConfig;
use crate::{Error, Result};

/// RNG stream reserved for weight initialisation; iteration `i` uses stream `i`.
const INIT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainSchedule {
    /// `(learning_rate, iterations)` run back to back.
    pub phases: Vec<(f64, u64)>,
    pub margin: f64,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            phases: alloc::vec![(1e-4, 150_000), (1e-5, 100_000)],
            margin: 0.2,
            seed: 0,
        }
    }
}

impl TrainSchedule {
    /// Longer recipe used with the 64-pixel, alignment-free configuration.
    pub fn low_resolution() -> Self {
        Self {
            phases: alloc::vec![(1e-4, 250_000), (1e-5, 350_000)],
            ..Self::default()
        }
    }

    pub fn total_iterations(&self) -> u64 {
        self.phases.iter().map(|p| p.1).sum()
    }

    /// Rate for the zero-based `iteration`; `None` past the end.
    pub fn learning_rate(&self, iteration: u64) -> Option<f64> {
        let mut end = 0;
        for &(lr, n) in &self.phases {
            end += n;
            if iteration < end {
                return Some(lr);
            }
        }
        None
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::InvalidParameter("schedule has no phases".into()));
        }
        for &(lr, n) in &self.phases {
            if !(lr > 0.0 && lr.is_finite()) || n == 0 {
                return Err(Error::InvalidParameter(format!("invalid schedule phase ({lr}, {n})")));
            }
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::InvalidParameter(format!("invalid margin {}", self.margin)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub p: usize,
    pub k: usize,
    pub schedule: TrainSchedule,
    pub sampling: SamplingConfig,
    pub average_nonzero: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            p: 16,
            k: 2,
            schedule: TrainSchedule::default(),
            sampling: SamplingConfig::default(),
            average_nonzero: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p < 2 || self.k == 0 {
            return Err(Error::InvalidParameter(format!(
                "batches need p >= 2 and k >= 1, got p={} k={}",
                self.p, self.k
            )));
        }
        self.schedule.validate()?;
        self.sampling.validate()
    }

    pub fn triplet(&self) -> TripletConfig {
        TripletConfig {
            margin: self.schedule.margin,
            average_nonzero: self.average_nonzero,
        }
    }
}

/// Supplies network input planes for frames of a training video.
pub trait ClipSource {
    /// `positions.len()` planes of `size * size` values, back to back, for
    /// the given zero-based frame positions.
    fn planes(&self, video_id: &str, positions: &[usize], size: usize) -> Result<Vec<f32>>;
}

/// Silhouettes held in memory, converted to input planes on insertion.
#[derive(Debug, Clone, Default)]
pub struct InMemoryClips {
    size: usize,
    videos: BTreeMap<String, Vec<Vec<f32>>>,
}

impl InMemoryClips {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            videos: BTreeMap::new(),
        }
    }

    pub fn insert<'a>(&mut self, video_id: impl Into<String>, frames: impl IntoIterator<Item = &'a Mask>) {
        let planes = frames.into_iter().map(|m| frame_input::<f32>(m, self.size)).collect();
        self.videos.insert(video_id.into(), planes);
    }

    pub fn frame_count(&self, video_id: &str) -> Option<usize> {
        self.videos.get(video_id).map(Vec::len)
    }

    pub fn frame_counts(&self) -> BTreeMap<String, usize> {
        self.videos.iter().map(|(k, v)| (k.clone(), v.len())).collect()
    }
}

impl ClipSource for InMemoryClips {
    fn planes(&self, video_id: &str, positions: &[usize], size: usize) -> Result<Vec<f32>> {
        if size != self.size {
            return Err(Error::DimensionMismatch(format!("planes stored at {}, requested {size}", self.size)));
        }
        let frames = self.videos.get(video_id).ok_or_else(|| Error::Manifest(format!("no frames for video `{video_id}`")))?;
        let mut out = Vec::with_capacity(positions.len() * size * size);
        for &p in positions {
            let plane = frames
                .get(p)
                .ok_or_else(|| Error::SequenceTooShort(format!("{video_id} has no frame {p}")))?;
            out.extend_from_slice(plane);
        }
        Ok(out)
    }
}

/// Deterministic generator for one training iteration.
pub fn iteration_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    rng
}

/// A sampled batch with its network input, ready for an optimizer step.
#[derive(Debug, Clone)]
pub struct PreparedBatch {
    pub iteration: u64,
    pub batch: PKBatch,
    pub frames: Tensor<f32>,
    pub lens: Vec<usize>,
}

/// Samples and loads the batch of zero-based `iteration`. Depends only on
/// the seed and the iteration, so batches may be prepared ahead of time.
pub fn prepare_batch<S: ClipSource + ?Sized>(
    set: &TrainingSet,
    config: &TrainConfig,
    input_size: usize,
    iteration: u64,
    source: &S,
) -> Result<PreparedBatch> {
    let mut rng = iteration_rng(config.schedule.seed, iteration);
    let batch = pk_sample(set, config.p, config.k, &config.sampling, &mut rng)?;
    let mut data = Vec::new();
    let mut lens = Vec::with_capacity(batch.entries.len());
    for e in &batch.entries {
        let positions: Vec<usize> = e.clip.positions().collect();
        data.extend(source.planes(&e.video_id, &positions, input_size)?);
        lens.push(positions.len());
    }
    let n = lens.iter().sum();
    let frames = Tensor::from_vec([n, 1, input_size, input_size], data)?;
    Ok(PreparedBatch {
        iteration,
        batch,
        frames,
        lens,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Iterations completed, including this one.
    pub iteration: u64,
    pub loss: f64,
    pub learning_rate: f64,
    pub active_triples: usize,
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct Trainer {
    pub net: GaitNet<f32>,
    pub optimizer: Adam<f32>,
    pub config: TrainConfig,
    set: TrainingSet,
    completed: u64,
}

impl Trainer {
    /// Fresh network initialised from the schedule seed.
    pub fn new(model: ModelConfig, config: TrainConfig, set: TrainingSet) -> Result<Self> {
        config.validate()?;
        if set.len() < config.p {
            return Err(Error::NotEnoughSubjects {
                needed: config.p,
                available: set.len(),
            });
        }
        let mut net = GaitNet::new(model)?;
        initialize(&mut net, &mut iteration_rng(config.schedule.seed, INIT_STREAM));
        Ok(Self {
            net,
            optimizer: Adam::new(),
            config,
            set,
            completed: 0,
        })
    }

    /// Continues from saved weights, optimizer state and iteration count.
    pub fn resume(net: GaitNet<f32>, optimizer: Adam<f32>, completed: u64, config: TrainConfig, set: TrainingSet) -> Result<Self> {
        config.validate()?;
        if optimizer.steps != completed {
            return Err(Error::State(format!(
                "optimizer has {} steps but {completed} iterations were completed",
                optimizer.steps
            )));
        }
        Ok(Self {
            net,
            optimizer,
            config,
            set,
            completed,
        })
    }

    pub fn training_set(&self) -> &TrainingSet {
        &self.set
    }

    pub fn completed(&self) -> u64 {
        self.completed
    }

    pub fn finished(&self) -> bool {
        self.completed >= self.config.schedule.total_iterations()
    }

    pub fn prepare<S: ClipSource + ?Sized>(&self, source: &S) -> Result<PreparedBatch> {
        prepare_batch(&self.set, &self.config, self.net.config.input_size, self.completed, source)
    }

    /// Forward, loss, backward and one Adam update. A non-finite loss aborts
    /// before any parameter changes.
    pub fn apply(&mut self, prepared: PreparedBatch) -> Result<StepReport> {
        if prepared.iteration != self.completed {
            return Err(Error::State(format!(
                "batch for iteration {} applied at iteration {}",
                prepared.iteration, self.completed
            )));
        }
        let lr = self
            .config
            .schedule
            .learning_rate(self.completed)
            .ok_or_else(|| Error::State("schedule finished".into()))?;
        self.net.zero_grad();
        let out = self.net.forward_train(prepared.frames, &prepared.lens)?;
        let patches = self.net.ppm.patches.len();
        let labels = prepared.batch.labels();
        let loss = batch_all_triplet(out.data(), &labels, patches, self.net.config.embed_dim, self.config.triplet());
        if !loss.loss.is_finite() || loss.grad.iter().any(|g| !g.is_finite()) {
            self.net.backward(&Tensor::zeros(out.shape()));
            return Err(Error::NonFiniteLoss(self.completed + 1));
        }
        let dout = Tensor::from_vec(out.shape(), loss.grad)?;
        self.net.backward(&dout);
        self.optimizer.step(&mut self.net, lr);
        self.completed += 1;
        Ok(StepReport {
            iteration: self.completed,
            loss: loss.loss,
            learning_rate: lr,
            active_triples: loss.active,
            degenerate: loss.triples == 0,
        })
    }

    pub fn step<S: ClipSource + ?Sized>(&mut self, source: &S) -> Result<StepReport> {
        let batch = self.prepare(source)?;
        self.apply(batch)
    }
}
