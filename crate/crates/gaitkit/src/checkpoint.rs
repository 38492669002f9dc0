//! Versioned single-file checkpoints and the training run directory.
//!
//! File layout: the 8 bytes `GAITCKPT`, a little-endian `u32` format
//! version, a little-endian `u64` header length, the JSON header, then every
//! tensor as little-endian `f32` at the offsets listed in the header.
//!
//! A run directory holds `ckpt_<iteration>/model.gaitckpt`, a `latest` file
//! naming the newest checkpoint directory, and `metrics.log`.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use gaitkit_core::model::{GaitNet, ModelConfig};
use gaitkit_core::nn::Module;
use gaitkit_core::training::{Adam, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{format_error, IoContext};
use crate::io::write_atomic;
use crate::Result;

const MAGIC: &[u8; 8] = b"GAITCKPT";
pub const FORMAT_VERSION: u32 = 1;
pub const CHECKPOINT_FILE: &str = "model.gaitckpt";
pub const LATEST: &str = "latest";
pub const METRICS_LOG: &str = "metrics.log";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrainingHeader {
    completed: u64,
    optimizer_steps: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    /// Batches are drawn from stream `completed` of a generator seeded with
    /// `config.schedule.seed`; no other generator state exists.
    config: TrainConfig,
    last_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    tensors: Vec<TensorEntry>,
    training: Option<TrainingHeader>,
}

/// Optimizer progress saved alongside the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingState {
    pub completed: u64,
    pub optimizer: Adam<f32>,
    pub config: TrainConfig,
    pub last_loss: Option<f64>,
}

fn moment_name(kind: &str, slot: usize) -> String {
    format!("optimizer.{kind}.{slot}")
}

pub fn encode_checkpoint(net: &GaitNet<f32>, training: Option<&TrainingState>) -> Vec<u8> {
    let mut tensors = Vec::new();
    let mut data: Vec<f32> = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, values: &[f32]| {
        tensors.push(TensorEntry {
            name,
            shape,
            offset: data.len(),
            len: values.len(),
        });
        data.extend_from_slice(values);
    };
    net.visit("", &mut |name, p| push(name.to_string(), p.shape.clone(), &p.value));
    if let Some(t) = training {
        for (slot, (m, v)) in t.optimizer.first_moment.iter().zip(&t.optimizer.second_moment).enumerate() {
            push(moment_name("m", slot), vec![m.len()], m);
            push(moment_name("v", slot), vec![v.len()], v);
        }
    }
    let header = Header {
        model: net.config,
        tensors,
        training: training.map(|t| TrainingHeader {
            completed: t.completed,
            optimizer_steps: t.optimizer.steps,
            beta1: t.optimizer.beta1,
            beta2: t.optimizer.beta2,
            eps: t.optimizer.eps,
            config: t.config.clone(),
            last_loss: t.last_loss,
        }),
    };
    let json = serde_json::to_vec(&header).expect("header serialises");
    let mut out = Vec::with_capacity(20 + json.len() + 4 * data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8], origin: &Path) -> Result<(GaitNet<f32>, Option<TrainingState>)> {
    let bad = |m: String| format_error(origin, m);
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a gaitkit checkpoint".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(bad(format!("checkpoint format {version}, this build reads {FORMAT_VERSION}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(20..20 + header_len).ok_or_else(|| bad("truncated header".into()))?;
    let header: Header = serde_json::from_slice(body).at(origin)?;
    let raw = &bytes[20 + header_len..];
    if raw.len() % 4 != 0 {
        return Err(bad("tensor data is not a whole number of f32 values".into()));
    }
    let data: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    let mut tensors: BTreeMap<&str, &TensorEntry> = BTreeMap::new();
    for t in &header.tensors {
        if t.offset + t.len > data.len() || t.shape.iter().product::<usize>() != t.len {
            return Err(bad(format!("tensor `{}` is out of bounds", t.name)));
        }
        tensors.insert(&t.name, t);
    }
    let slice = |t: &TensorEntry| &data[t.offset..t.offset + t.len];

    let mut net = GaitNet::new(header.model)?;
    let mut problem = None;
    net.visit_mut("", &mut |name, p| match tensors.remove(name) {
        Some(t) if t.shape == p.shape => p.value.copy_from_slice(slice(t)),
        Some(t) => {
            problem.get_or_insert(format!("tensor `{name}` has shape {:?}, model expects {:?}", t.shape, p.shape));
        }
        None => {
            problem.get_or_insert(format!("tensor `{name}` is missing"));
        }
    });
    if let Some(p) = problem {
        return Err(bad(p));
    }

    let training = match header.training {
        None => None,
        Some(h) => {
            let mut optimizer = Adam::new();
            optimizer.beta1 = h.beta1;
            optimizer.beta2 = h.beta2;
            optimizer.eps = h.eps;
            optimizer.steps = h.optimizer_steps;
            let mut slot = 0;
            while let (Some(m), Some(v)) = (tensors.remove(moment_name("m", slot).as_str()), tensors.remove(moment_name("v", slot).as_str())) {
                optimizer.first_moment.push(slice(m).to_vec());
                optimizer.second_moment.push(slice(v).to_vec());
                slot += 1;
            }
            Some(TrainingState {
                completed: h.completed,
                optimizer,
                config: h.config,
                last_loss: h.last_loss,
            })
        }
    };
    if let Some(name) = tensors.keys().next() {
        return Err(bad(format!("unexpected tensor `{name}`")));
    }
    Ok((net, training))
}

pub fn save_checkpoint(path: &Path, net: &GaitNet<f32>, training: Option<&TrainingState>) -> Result<()> {
    write_atomic(path, &encode_checkpoint(net, training))
}

pub fn load_checkpoint(path: &Path) -> Result<(GaitNet<f32>, Option<TrainingState>)> {
    let bytes = fs::read(path).at(path)?;
    decode_checkpoint(&bytes, path)
}

/// Directory of periodic checkpoints for one training run.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).at(root)?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn checkpoint_path(&self, iteration: u64) -> PathBuf {
        self.root.join(format!("ckpt_{iteration}")).join(CHECKPOINT_FILE)
    }

    /// Writes `ckpt_<iteration>` and then points `latest` at it.
    pub fn save(&self, net: &GaitNet<f32>, state: &TrainingState) -> Result<PathBuf> {
        let path = self.checkpoint_path(state.completed);
        save_checkpoint(&path, net, Some(state))?;
        write_atomic(&self.root.join(LATEST), format!("ckpt_{}\n", state.completed).as_bytes())?;
        Ok(path)
    }

    /// Newest checkpoint file, if any.
    pub fn latest(&self) -> Result<Option<PathBuf>> {
        latest_in(&self.root)
    }

    /// Appends `iteration loss learning_rate wall_seconds`.
    pub fn log_metrics(&self, iteration: u64, loss: f64, learning_rate: f64, wall_seconds: f64) -> Result<()> {
        let path = self.root.join(METRICS_LOG);
        let mut f = OpenOptions::new().create(true).append(true).open(&path).at(&path)?;
        writeln!(f, "{iteration} {loss:.6e} {learning_rate:e} {wall_seconds:.3}").at(&path)
    }
}

fn latest_in(root: &Path) -> Result<Option<PathBuf>> {
    let pointer = root.join(LATEST);
    if !pointer.is_file() {
        return Ok(None);
    }
    let name = fs::read_to_string(&pointer).at(&pointer)?;
    let path = root.join(name.trim()).join(CHECKPOINT_FILE);
    if !path.is_file() {
        return Err(format_error(&pointer, format!("points at missing {}", path.display())));
    }
    Ok(Some(path))
}

/// A checkpoint file, or a run directory resolved through `latest`.
pub fn resolve_checkpoint(path: &Path) -> Result<PathBuf> {
    if path.is_file() {
        return Ok(path.to_path_buf());
    }
    latest_in(path)?.ok_or_else(|| crate::Error::Missing {
        path: path.to_path_buf(),
        what: "checkpoint file or run directory with a `latest` pointer".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use gaitkit_core::model::PpmVariant;

    fn tiny() -> GaitNet<f32> {
        let mut net = GaitNet::new(ModelConfig {
            input_size: 32,
            use_alignment: true,
            block23_stride: 1,
            pyramid_u: 2,
            pyramid_v: 1,
            embed_dim: 3,
            ppm_variant: PpmVariant::Ppm,
            channel_scale: 1.0 / 16.0,
        })
        .unwrap();
        let mut k = 0u32;
        net.visit_mut("", &mut |_, p| {
            for v in &mut p.value {
                k += 1;
                *v = (k % 13) as f32 * 0.1 - 0.6;
            }
        });
        net
    }

    fn values(net: &GaitNet<f32>) -> Vec<f32> {
        let mut out = Vec::new();
        net.visit("", &mut |_, p| out.extend_from_slice(&p.value));
        out
    }

    #[test]
    fn round_trip_with_optimizer_state() {
        let net = tiny();
        let mut optimizer = Adam::new();
        optimizer.steps = 3;
        optimizer.first_moment = vec![vec![0.5, 1.5], vec![2.0]];
        optimizer.second_moment = vec![vec![0.25, 0.75], vec![4.0]];
        let state = TrainingState {
            completed: 3,
            optimizer,
            config: TrainConfig::default(),
            last_loss: Some(0.125),
        };
        let bytes = encode_checkpoint(&net, Some(&state));
        let (back, got) = decode_checkpoint(&bytes, Path::new("x")).unwrap();
        assert_eq!(values(&back), values(&net));
        assert_eq!(back.config, net.config);
        assert_eq!(got.unwrap(), state);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode_checkpoint(&tiny(), None);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 4], Path::new("x")).is_err());
        let mut wrong = bytes.clone();
        wrong[8] = 9;
        assert!(decode_checkpoint(&wrong, Path::new("x")).is_err());
        assert!(decode_checkpoint(b"PNG", Path::new("x")).is_err());
    }

    #[test]
    fn run_dir_tracks_latest() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::create(dir.path()).unwrap();
        assert!(run.latest().unwrap().is_none());
        let net = tiny();
        for completed in [5, 10] {
            let state = TrainingState {
                completed,
                optimizer: Adam { steps: completed, ..Adam::new() },
                config: TrainConfig::default(),
                last_loss: None,
            };
            run.save(&net, &state).unwrap();
        }
        let latest = run.latest().unwrap().unwrap();
        assert!(latest.ends_with("ckpt_10/model.gaitckpt"));
        assert_eq!(resolve_checkpoint(dir.path()).unwrap(), latest);
        run.log_metrics(10, 0.5, 1e-4, 1.0).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join(METRICS_LOG)).unwrap().lines().count(), 1);
    }
}
