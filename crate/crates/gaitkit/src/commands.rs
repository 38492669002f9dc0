//! The pipeline stages. Each reads and writes only the documented on-disk
//! formats, so stages can be run, rerun and inspected independently.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use gaitkit_core::eval::{run_protocol, EvalReport};
use gaitkit_core::gei::{gei_cluster, gei_full, gei_piecewise, GaitEnergyImage, TrajectorySegment};
use gaitkit_core::manifest::{build_probe_gallery, Split, VideoRecord};
use gaitkit_core::model::sequence_input;
use gaitkit_core::silhouette::{FrameOutcome, SilhouetteExtractor};
use gaitkit_core::training::{prepare_batch, PreparedBatch, Trainer, TrainingSet};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, resolve_checkpoint, RunDir, TrainingState};
use crate::config::RunConfig;
use crate::error::IoContext;
use crate::frames::open_video;
use crate::io::{write_image_png, write_json, write_png16};
use crate::manifest_io::LoadedManifest;
use crate::sequence_io::{read_sequence, write_sequence, DiskClips};
use crate::store::{EmbeddingStore, StoreWriter};
use crate::{Error, Result};

fn pool(cfg: &RunConfig) -> Result<rayon::ThreadPool> {
    let threads = if cfg.deterministic { 1 } else { cfg.workers };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} workers: {e}")))
}

/// Runs `f` over `items` on the worker pool; results keep input order.
fn parallel<T: Sync, R: Send>(cfg: &RunConfig, items: &[T], f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    use rayon::prelude::*;
    pool(cfg)?.install(|| items.par_iter().map(&f).collect::<Vec<_>>()).into_iter().collect()
}

fn records(manifest: &LoadedManifest, split: Option<Split>) -> Vec<&VideoRecord> {
    manifest
        .manifest
        .records()
        .iter()
        .filter(|r| split.map_or(true, |s| manifest.manifest.split_of(&r.subject_id) == Some(s)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedVideo {
    pub video_id: String,
    pub kept: usize,
    pub dropped: usize,
}

fn extract_one(cfg: &RunConfig, record: &VideoRecord, videos: &Path, out: &Path) -> Result<ExtractedVideo> {
    let final_dir = out.join(&record.video_id);
    let mut tmp = final_dir.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    if tmp.exists() {
        fs::remove_dir_all(&tmp).at(&tmp)?;
    }
    let run = || -> Result<ExtractedVideo> {
        let mut source = open_video(videos, &record.video_id)?;
        fs::create_dir_all(&tmp).at(&tmp)?;
        let mut extractor = SilhouetteExtractor::new(record.clone(), cfg.extract.gmm.clone(), cfg.extract.variant())?;
        while let Some(frame) = source.next_frame() {
            let (index, image) = frame?;
            if let FrameOutcome::Kept { variant: Some(v), .. } = extractor.push(index, &image)? {
                write_image_png(&tmp.join("variant").join(format!("{index}.png")), &v)?;
            }
        }
        let (seq, dropped) = extractor.finish()?;
        write_sequence(&tmp, &seq, &dropped)?;
        Ok(ExtractedVideo {
            video_id: record.video_id.clone(),
            kept: seq.len(),
            dropped: dropped.len(),
        })
    };
    match run() {
        Ok(summary) => {
            if final_dir.exists() {
                fs::remove_dir_all(&final_dir).at(&final_dir)?;
            }
            fs::rename(&tmp, &final_dir).at(&final_dir)?;
            Ok(summary)
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&tmp);
            Err(Error::Video {
                video_id: record.video_id.clone(),
                source: Box::new(e),
            })
        }
    }
}

/// Silhouettes for every manifest video under `out/<video_id>/`.
pub fn extract(cfg: &RunConfig, manifest: &LoadedManifest, videos: &Path, out: &Path) -> Result<Vec<ExtractedVideo>> {
    fs::create_dir_all(out).at(out)?;
    let recs = records(manifest, None);
    let summary = parallel(cfg, &recs, |r| extract_one(cfg, r, videos, out))?;
    write_json(&out.join("extract_summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeiEntry {
    pub file: String,
    pub source_frames: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segment: Option<TrajectorySegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeiSidecar {
    pub video_id: String,
    pub full: GeiEntry,
    /// Empty when the sequence has fewer frames than clusters.
    pub cluster: Vec<GeiEntry>,
    pub piecewise: Vec<GeiEntry>,
}

fn save_gei(dir: &Path, file: String, g: &GaitEnergyImage, segment: Option<TrajectorySegment>) -> Result<GeiEntry> {
    write_png16(&dir.join(&file), g.width, g.height, &g.to_u16())?;
    Ok(GeiEntry {
        file,
        source_frames: g.source_frames.clone(),
        segment,
    })
}

/// The three GEI kinds for every extracted manifest video.
pub fn gei(cfg: &RunConfig, manifest: &LoadedManifest, silhouettes: &Path, out: &Path) -> Result<Vec<GeiSidecar>> {
    let recs = records(manifest, None);
    parallel(cfg, &recs, |r| {
        let seq = read_sequence(&silhouettes.join(&r.video_id), None)?;
        let dir = out.join(&r.video_id);
        let full = save_gei(&dir, "gei_full.png16".into(), &gei_full(&seq)?, None)?;
        let cluster = if seq.len() >= cfg.gei.clusters {
            gei_cluster(&seq, cfg.gei.clusters, cfg.seed)?
                .iter()
                .enumerate()
                .map(|(i, g)| save_gei(&dir, format!("gei_cluster_{i}.png16"), g, None))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let (geis, segments) = gei_piecewise(&seq, cfg.gei.segment)?;
        let piecewise = geis
            .iter()
            .zip(segments)
            .enumerate()
            .map(|(i, (g, s))| save_gei(&dir, format!("gei_piecewise_{i}.png16"), g, Some(s)))
            .collect::<Result<_>>()?;
        let sidecar = GeiSidecar {
            video_id: r.video_id.clone(),
            full,
            cluster,
            piecewise,
        };
        write_json(&dir.join("gei.json"), &sidecar)?;
        Ok(sidecar)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub completed: u64,
    pub last_loss: Option<f64>,
    pub checkpoint: Option<PathBuf>,
}

/// Written next to the checkpoints when a step fails.
#[derive(Serialize)]
struct FailedBatch {
    iteration: u64,
    error: String,
    /// Video id and one-based frame ordinals of each clip.
    clips: Vec<(String, Vec<usize>)>,
}

/// Trains from the silhouettes of the train split, checkpointing into
/// `run`. With `resume`, continues from the run's `latest` checkpoint.
/// `stop_after` caps the iterations run by this call.
pub fn train(
    cfg: &RunConfig,
    manifest: &LoadedManifest,
    silhouettes: &Path,
    run: &Path,
    resume: bool,
    stop_after: Option<u64>,
) -> Result<TrainOutcome> {
    let train_recs = records(manifest, Some(Split::Train));
    let clips = DiskClips::open(silhouettes, train_recs.iter().map(|r| r.video_id.as_str()))?;
    let set = TrainingSet::from_manifest(&manifest.manifest, &clips.frame_counts());
    let run_dir = RunDir::create(run)?;
    let config = cfg.train_config();

    let mut trainer = match (resume, run_dir.latest()?) {
        (true, Some(path)) => {
            let (net, state) = load_checkpoint(&path)?;
            let state = state.ok_or_else(|| Error::Config(format!("{} holds no training state", path.display())))?;
            if net.config != cfg.model {
                return Err(Error::Config(format!("model settings differ from checkpoint {}", path.display())));
            }
            Trainer::resume(net, state.optimizer, state.completed, config, set)?
        }
        (true, None) => return Err(Error::Missing { path: run.to_path_buf(), what: "checkpoint to resume from".into() }),
        (false, Some(path)) => {
            return Err(Error::Config(format!(
                "{} already holds {}; pass --resume to continue",
                run.display(),
                path.display()
            )))
        }
        (false, None) => Trainer::new(cfg.model, config, set)?,
    };

    let start = trainer.completed();
    let total = trainer.config.schedule.total_iterations();
    let end = stop_after.map_or(total, |n| total.min(start + n));
    let clock = Instant::now();
    let mut last_loss = None;
    let mut last_saved = None;
    let save = |trainer: &Trainer, loss: Option<f64>| {
        run_dir.save(
            &trainer.net,
            &TrainingState {
                completed: trainer.completed(),
                optimizer: trainer.optimizer.clone(),
                config: trainer.config.clone(),
                last_loss: loss,
            },
        )
    };

    let mut step = |trainer: &mut Trainer, batch: PreparedBatch| -> Result<()> {
        let clips: Vec<(String, Vec<usize>)> =
            batch.batch.entries.iter().map(|e| (e.video_id.clone(), e.clip.indices.clone())).collect();
        let report = match trainer.apply(batch) {
            Ok(report) => report,
            Err(e) => {
                let dump = FailedBatch {
                    iteration: trainer.completed() + 1,
                    error: e.to_string(),
                    clips,
                };
                write_json(&run.join(format!("failed_step_{}.json", dump.iteration)), &dump)?;
                return Err(e.into());
            }
        };
        last_loss = Some(report.loss);
        let i = report.iteration;
        if i % cfg.training.log_every == 0 || i == end {
            run_dir.log_metrics(i, report.loss, report.learning_rate, clock.elapsed().as_secs_f64())?;
        }
        if i % cfg.training.checkpoint_every == 0 || i == end {
            last_saved = Some(save(trainer, last_loss)?);
        }
        Ok(())
    };

    let input_size = trainer.net.config.input_size;
    if cfg.deterministic || cfg.training.prefetch == 0 {
        while trainer.completed() < end {
            let batch = trainer.prepare(&clips)?;
            step(&mut trainer, batch)?;
        }
    } else {
        let set = trainer.training_set().clone();
        let tcfg = trainer.config.clone();
        std::thread::scope(|scope| -> Result<()> {
            let (tx, rx) = mpsc::sync_channel(cfg.training.prefetch);
            let clips = &clips;
            scope.spawn(move || {
                for it in start..end {
                    let batch = prepare_batch(&set, &tcfg, input_size, it, clips);
                    let failed = batch.is_err();
                    if tx.send(batch).is_err() || failed {
                        break;
                    }
                }
            });
            while trainer.completed() < end {
                let batch = rx.recv().map_err(|_| Error::Config("batch loader stopped".into()))??;
                step(&mut trainer, batch)?;
            }
            Ok(())
        })?;
    }
    Ok(TrainOutcome {
        completed: trainer.completed(),
        last_loss,
        checkpoint: last_saved,
    })
}

/// Embeds every video of `split` (all videos when `None`) into a store.
pub fn embed(
    cfg: &RunConfig,
    manifest: &LoadedManifest,
    checkpoint: &Path,
    silhouettes: &Path,
    out: &Path,
    split: Option<Split>,
) -> Result<usize> {
    let path = resolve_checkpoint(checkpoint)?;
    let (net, _) = load_checkpoint(&path)?;
    let recs = records(manifest, split);
    let limit = cfg.sampling.test_max_frames;
    let vectors = parallel(cfg, &recs, |r| {
        let seq = read_sequence(&silhouettes.join(&r.video_id), Some(limit))?;
        let input = sequence_input::<f32>(seq.frames().iter().map(|f| &f.grid), net.config.input_size);
        Ok((seq.len(), net.embed(&input)?))
    })?;
    let mut store = StoreWriter::open(out)?;
    for (r, (frames, v)) in recs.iter().zip(&vectors) {
        store.insert(&r.video_id, &r.subject_id, r.camera_id, *frames, v)?;
    }
    store.finish()?;
    Ok(recs.len())
}

/// Evaluates the configured protocol; writes `report.json` and `report.txt`
/// into `out` when given.
pub fn eval(cfg: &RunConfig, manifest: &LoadedManifest, store: &Path, out: Option<&Path>) -> Result<EvalReport> {
    let specs = build_probe_gallery(&manifest.manifest, cfg.eval.protocol, &manifest.protocol)?;
    let store = EmbeddingStore::load(store)?;
    let report = run_protocol(&specs, &store, &cfg.eval_options(cfg.model.embed_dim))?;
    if let Some(dir) = out {
        write_json(&dir.join("report.json"), &report)?;
        crate::io::write_atomic(&dir.join("report.txt"), report.render().as_bytes())?;
    }
    Ok(report)
}
