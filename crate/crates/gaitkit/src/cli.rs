//! Command-line front end.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gaitkit_core::manifest::Split;

use crate::commands;
use crate::config::{render_keys, ConfigBuilder, RunConfig};
use crate::manifest_io::load_manifest;
use crate::Result;

#[derive(Debug, Parser)]
#[command(name = "gaitkit", version, about = "Gait recognition from pedestrian videos")]
#[command(after_long_help = keys_help())]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

fn keys_help() -> String {
    format!("Configuration keys (--set KEY=VALUE, or GAITKIT_KEY with `__` for `.`):\n\n{}", render_keys())
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON or `key = value` configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Overrides a configuration key; repeatable. Goes before the subcommand.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Seed for initialisation, batch sampling and clustering.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Threads for extract, gei and embed.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Single worker, no prefetching; results are bit-reproducible.
    #[arg(long, global = true)]
    pub deterministic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

impl SplitArg {
    fn split(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All => None,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalised silhouettes for every manifest video.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory with one frame directory per video id.
        #[arg(long)]
        videos: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full, cluster and piecewise gait energy images.
    Gei {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        silhouettes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Triplet training on the train split.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        silhouettes: PathBuf,
        /// Run directory for checkpoints and metrics.
        #[arg(long)]
        run: PathBuf,
        /// Continue from the run's latest checkpoint.
        #[arg(long)]
        resume: bool,
        /// Stop after this many iterations of this invocation.
        #[arg(long, value_name = "N")]
        max_iterations: Option<u64>,
    },
    /// Embeddings of every video of a split.
    Embed {
        #[arg(long)]
        manifest: PathBuf,
        /// Checkpoint file or run directory.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        silhouettes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// Closed- and open-set scores of the configured protocol.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// Directory for report.json and report.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl GlobalArgs {
    /// Defaults, then file, environment, `--set`, then dedicated flags.
    pub fn resolve<I, K, V>(&self, env: I) -> Result<RunConfig>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut b = ConfigBuilder::new();
        if let Some(path) = &self.config {
            b.apply_file(path)?;
        }
        b.apply_env(env)?;
        for s in &self.set {
            b.assign(s)?;
        }
        if let Some(seed) = self.seed {
            b.set("seed", &seed.to_string())?;
        }
        if let Some(workers) = self.workers {
            b.set("workers", &workers.to_string())?;
        }
        if self.deterministic {
            b.set("deterministic", "true")?;
        }
        b.build()
    }
}

/// Runs one parsed command line; returns the text to print.
pub fn run<I, K, V>(cli: &Cli, env: I) -> Result<String>
where
    I: IntoIterator<Item = (K, V)>,
    K: AsRef<str>,
    V: AsRef<str>,
{
    let cfg = cli.global.resolve(env)?;
    match &cli.command {
        Command::Extract { manifest, videos, out } => {
            let summary = commands::extract(&cfg, &load_manifest(manifest)?, videos, out)?;
            let kept: usize = summary.iter().map(|s| s.kept).sum();
            let dropped: usize = summary.iter().map(|s| s.dropped).sum();
            Ok(format!("extracted {} videos: {kept} frames kept, {dropped} dropped", summary.len()))
        }
        Command::Gei { manifest, silhouettes, out } => {
            let written = commands::gei(&cfg, &load_manifest(manifest)?, silhouettes, out)?;
            Ok(format!("wrote GEIs for {} videos", written.len()))
        }
        Command::Train {
            manifest,
            silhouettes,
            run,
            resume,
            max_iterations,
        } => {
            let outcome = commands::train(&cfg, &load_manifest(manifest)?, silhouettes, run, *resume, *max_iterations)?;
            let loss = outcome.last_loss.map_or("n/a".into(), |l| format!("{l:.6}"));
            Ok(format!("{} iterations completed, last loss {loss}", outcome.completed))
        }
        Command::Embed {
            manifest,
            checkpoint,
            silhouettes,
            out,
            split,
        } => {
            let n = commands::embed(&cfg, &load_manifest(manifest)?, checkpoint, silhouettes, out, split.split())?;
            Ok(format!("embedded {n} videos"))
        }
        Command::Eval { manifest, embeddings, out } => {
            let report = commands::eval(&cfg, &load_manifest(manifest)?, embeddings, out.as_deref())?;
            Ok(report.render())
        }
    }
}
