//! Run configuration: every tunable knob under a dotted key.
//!
//! Sources are applied in order, later ones winning: built-in defaults, the
//! `--config` file (JSON, or `key = value` lines), `GAITKIT_*` environment
//! variables, `--set key=value` flags, then the dedicated global flags.
//! A key that does not exist in the default tree is rejected.
//!
//! Environment names map to keys by dropping the prefix, lowercasing, and
//! reading `__` as `.`: `GAITKIT_SAMPLING__M=28` sets `sampling.m`.

use std::fmt::Write as _;
use std::path::Path;

use gaitkit_core::eval::{DistanceMetric, EvalOptions};
use gaitkit_core::gei::{SegmentOptions, DEFAULT_CLUSTERS};
use gaitkit_core::manifest::Protocol;
use gaitkit_core::model::ModelConfig;
use gaitkit_core::sampling::SamplingConfig;
use gaitkit_core::silhouette::{BackgroundMode, GmmParams, InputVariant, PedestrianMode};
use gaitkit_core::training::{TrainConfig, TrainSchedule};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::IoContext;
use crate::{Error, Result};

pub const ENV_PREFIX: &str = "GAITKIT_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PedestrianChoice {
    Binary,
    Color,
    Grayscale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub gmm: GmmParams,
    pub pedestrian: PedestrianChoice,
    /// Quantisation bins for the grayscale pedestrian.
    pub bins: u16,
    pub background: BackgroundMode,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            gmm: GmmParams::default(),
            pedestrian: PedestrianChoice::Binary,
            bins: 8,
            background: BackgroundMode::Subtracted,
        }
    }
}

impl ExtractConfig {
    pub fn variant(&self) -> InputVariant {
        InputVariant {
            pedestrian: match self.pedestrian {
                PedestrianChoice::Binary => PedestrianMode::Binary,
                PedestrianChoice::Color => PedestrianMode::Color,
                PedestrianChoice::Grayscale => PedestrianMode::GrayscaleQuantized { bins: self.bins },
            },
            background: self.background,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeiConfig {
    pub clusters: usize,
    pub segment: SegmentOptions,
}

impl Default for GeiConfig {
    fn default() -> Self {
        Self {
            clusters: DEFAULT_CLUSTERS,
            segment: SegmentOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSection {
    pub p: usize,
    pub k: usize,
    pub phases: Vec<(f64, u64)>,
    pub margin: f64,
    pub average_nonzero: bool,
    pub checkpoint_every: u64,
    pub log_every: u64,
    /// Batches prepared ahead of the optimizer; ignored in deterministic mode.
    pub prefetch: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            p: t.p,
            k: t.k,
            phases: t.schedule.phases,
            margin: t.schedule.margin,
            average_nonzero: t.average_nonzero,
            checkpoint_every: 10_000,
            log_every: 100,
            prefetch: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricChoice {
    Euclidean,
    PatchMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSection {
    pub protocol: Protocol,
    pub metric: MetricChoice,
    pub ranks: Vec<usize>,
    pub far_levels: Vec<f64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        let o = EvalOptions::default();
        Self {
            protocol: Protocol::MultiScene,
            metric: MetricChoice::Euclidean,
            ranks: o.ranks,
            far_levels: o.far_levels,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    pub deterministic: bool,
    pub extract: ExtractConfig,
    pub gei: GeiConfig,
    pub sampling: SamplingConfig,
    pub model: ModelConfig,
    pub training: TrainingSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 1,
            deterministic: false,
            extract: ExtractConfig::default(),
            gei: GeiConfig::default(),
            sampling: SamplingConfig::default(),
            model: ModelConfig::default(),
            training: TrainingSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.gei.clusters == 0 || self.gei.segment.min_len == 0 {
            return Err(Error::Config("gei.clusters and gei.segment.min_len must be positive".into()));
        }
        if self.training.checkpoint_every == 0 || self.training.log_every == 0 {
            return Err(Error::Config("training.checkpoint_every and training.log_every must be positive".into()));
        }
        if self.eval.ranks.contains(&0) {
            return Err(Error::Config("eval.ranks must be at least 1".into()));
        }
        self.extract.gmm.validate()?;
        self.extract.variant().validate()?;
        self.model.validate()?;
        self.train_config().validate()?;
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            p: self.training.p,
            k: self.training.k,
            schedule: TrainSchedule {
                phases: self.training.phases.clone(),
                margin: self.training.margin,
                seed: self.seed,
            },
            sampling: self.sampling,
            average_nonzero: self.training.average_nonzero,
        }
    }

    pub fn eval_options(&self, embed_dim: usize) -> EvalOptions {
        EvalOptions {
            metric: match self.eval.metric {
                MetricChoice::Euclidean => DistanceMetric::Euclidean,
                MetricChoice::PatchMean => DistanceMetric::PatchMean { dim: embed_dim },
            },
            ranks: self.eval.ranks.clone(),
            far_levels: self.eval.far_levels.clone(),
        }
    }
}

/// Module that consumes a key, by its first path component.
fn owner(key: &str) -> &'static str {
    match key.split('.').next().unwrap_or("") {
        "extract" => "silhouette_pipeline",
        "gei" => "gei",
        "sampling" => "sampling",
        "model" => "model",
        "training" => "training",
        "eval" => "evaluation",
        _ => "cli",
    }
}

fn describe(key: &str) -> &'static str {
    match key {
        "seed" => "seed for initialisation, batch sampling and clustering",
        "workers" => "threads for extract, gei and embed",
        "deterministic" => "serialise all work for bit-exact reruns",
        "extract.gmm.history" => "background model history length in frames",
        "extract.gmm.var_threshold" => "squared Mahalanobis distance marking foreground",
        "extract.gmm.detect_shadows" => "label shadows and map them to background",
        "extract.gmm.learning_rate" => "adaptation rate; null means 1/history",
        "extract.gmm.morphology" => "mask post-processing: none, open or close",
        "extract.pedestrian" => "pedestrian appearance: binary, color or grayscale",
        "extract.bins" => "grayscale quantisation bins",
        "extract.background" => "background handling: subtracted or color",
        "gei.clusters" => "frame clusters for cluster GEIs",
        "gei.segment.penalty" => "per-segment cost of the trajectory fit, pixels squared",
        "gei.segment.min_len" => "minimum frames per trajectory segment",
        "sampling.mode" => "rf (random frames) or rt (random tracklets)",
        "sampling.m" => "frames per training clip in rf mode",
        "sampling.u" => "tracklets per clip",
        "sampling.l" => "frames per tracklet",
        "sampling.s" => "stride between tracklet frames",
        "sampling.strict_paper_bound" => "use the tighter tracklet start bound",
        "sampling.test_max_frames" => "frames embedded per sequence at test time",
        "model.input_size" => "square network input in pixels",
        "model.use_alignment" => "enable the learned affine alignment",
        "model.block23_stride" => "stride of the second and third backbone stages",
        "model.pyramid_u" => "horizontal pyramid levels",
        "model.pyramid_v" => "vertical pyramid levels",
        "model.embed_dim" => "output dimension per patch",
        "model.ppm_variant" => "ppm or ppm_v partition",
        "model.channel_scale" => "width multiplier for every convolution",
        "training.p" => "identities per batch",
        "training.k" => "clips per identity",
        "training.phases" => "[learning_rate, iterations] pairs run in order",
        "training.margin" => "triplet margin",
        "training.average_nonzero" => "average over active triples only",
        "training.checkpoint_every" => "iterations between checkpoints",
        "training.log_every" => "iterations between metrics log lines",
        "training.prefetch" => "batches prepared ahead of the optimizer",
        "eval.protocol" => "multi_scene, cross_scene or open_set_cross_scene",
        "eval.metric" => "euclidean or patch_mean",
        "eval.ranks" => "rank-n levels reported",
        "eval.far_levels" => "FAR levels (percent) for open-set DIR",
        _ => "",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyInfo {
    pub key: String,
    pub default: String,
    pub module: &'static str,
    pub description: &'static str,
}

fn leaves(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                leaves(&key, child, out);
            }
        }
        other => out.push((prefix.to_string(), other.clone())),
    }
}

fn default_tree() -> Value {
    serde_json::to_value(RunConfig::default()).expect("defaults serialise")
}

/// Every key with its default value and owning module.
pub fn keys() -> Vec<KeyInfo> {
    let mut out = Vec::new();
    leaves("", &default_tree(), &mut out);
    out.into_iter()
        .map(|(key, v)| KeyInfo {
            default: display_value(&v),
            module: owner(&key),
            description: describe(&key),
            key,
        })
        .collect()
}

/// Single-precision fields print at their own precision.
fn display_value(v: &Value) -> String {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or_default();
            let single = x as f32;
            if f64::from(single) == x {
                format!("{single:?}")
            } else {
                format!("{x:?}")
            }
        }
        Value::Array(items) => format!("[{}]", items.iter().map(display_value).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

/// One line per key: name, default, owning module, description.
pub fn render_keys() -> String {
    let mut s = String::new();
    for k in keys() {
        let _ = write!(s, "  {:<32} {:<24} [{}]", k.key, k.default, k.module);
        if !k.description.is_empty() {
            let _ = write!(s, " {}", k.description);
        }
        s.push('\n');
    }
    s
}

/// Layered configuration under construction.
#[derive(Debug, Clone)]
pub struct ConfigBuilder {
    tree: Value,
}

impl Default for ConfigBuilder {
    fn default() -> Self {
        Self { tree: default_tree() }
    }
}

fn parse_scalar(raw: &str, current: &Value) -> Value {
    let raw = raw.trim();
    match (serde_json::from_str::<Value>(raw), current) {
        (Ok(v @ Value::String(_)), _) => v,
        (Ok(_), Value::String(_)) | (Err(_), _) => Value::String(raw.to_string()),
        (Ok(v), _) => v,
    }
}

impl ConfigBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn slot(&mut self, key: &str) -> Result<&mut Value> {
        let mut node = &mut self.tree;
        for part in key.split('.') {
            node = match node {
                Value::Object(map) => map.get_mut(part),
                _ => None,
            }
            .ok_or_else(|| Error::Config(format!("unknown key `{key}`")))?;
        }
        Ok(node)
    }

    /// Sets one key from its textual form. JSON literals are parsed; anything
    /// else, or any value for a string key, is taken as a string.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<&mut Self> {
        let slot = self.slot(key)?;
        if slot.is_object() {
            return Err(Error::Config(format!("`{key}` is a section, not a key")));
        }
        *slot = parse_scalar(raw, slot);
        Ok(self)
    }

    pub fn set_value(&mut self, key: &str, value: Value) -> Result<&mut Self> {
        let slot = self.slot(key)?;
        if slot.is_object() {
            if let Value::Object(map) = value {
                for (k, v) in map {
                    self.set_value(&format!("{key}.{k}"), v)?;
                }
                return Ok(self);
            }
            return Err(Error::Config(format!("`{key}` is a section, not a key")));
        }
        *slot = value;
        Ok(self)
    }

    /// `key=value` assignment as given to `--set`.
    pub fn assign(&mut self, assignment: &str) -> Result<&mut Self> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got `{assignment}`")))?;
        self.set(k.trim(), v)
    }

    /// JSON (nested or with dotted keys) or `key = value` lines with `#`
    /// comments.
    pub fn apply_text(&mut self, text: &str) -> Result<&mut Self> {
        if text.trim_start().starts_with('{') {
            let v: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON config: {e}")))?;
            let Value::Object(map) = v else { unreachable!("starts with a brace") };
            for (k, v) in map {
                self.set_value(&k, v)?;
            }
            return Ok(self);
        }
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.assign(line).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(self)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<&mut Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        self.apply_text(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies `GAITKIT_*` variables; other variables are ignored.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<&mut Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        for (name, value) in vars {
            let Some(rest) = name.as_ref().strip_prefix(ENV_PREFIX) else { continue };
            let key = rest.to_lowercase().replace("__", ".");
            self.set(&key, value.as_ref())
                .map_err(|e| Error::Config(format!("environment variable {}: {e}", name.as_ref())))?;
        }
        Ok(self)
    }

    pub fn build(&self) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_value(self.tree.clone()).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
