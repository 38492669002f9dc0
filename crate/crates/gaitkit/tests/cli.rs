mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::{snapshot, write_corpus, Corpus, TINY};
use gaitkit::checkpoint::{load_checkpoint, resolve_checkpoint};
use gaitkit::store::EmbeddingStore;

fn gaitkit(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gaitkit"));
    cmd.args(args).env_remove("GAITKIT_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn ok(args: &[&str], env: &[(&str, &str)]) -> String {
    let out = gaitkit(args, env);
    assert!(
        out.status.success(),
        "gaitkit {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn tiny(args: Vec<String>) -> Vec<String> {
    tiny_without(args, "")
}

/// The tiny-model overrides, minus those starting with `skip`, then `args`.
fn tiny_without(args: Vec<String>, skip: &str) -> Vec<String> {
    let mut out = Vec::new();
    for s in TINY.iter().filter(|s| skip.is_empty() || !s.starts_with(skip)) {
        out.push("--set".to_string());
        out.push((*s).to_string());
    }
    out.extend(args);
    out
}

fn run(args: Vec<String>) -> String {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(&refs, &[])
}

fn p(path: &Path) -> String {
    path.display().to_string()
}

fn extracted(corpus: &Corpus) -> std::path::PathBuf {
    let out = corpus.root.join("sil");
    ok(
        &["extract", "--manifest", &p(&corpus.manifest), "--videos", &p(&corpus.videos), "--out", &p(&out), "--workers", "2"],
        &[],
    );
    out
}

#[test]
fn help_lists_every_key_with_default_and_module() {
    let text = ok(&["--help"], &[]);
    for key in ["sampling.strict_paper_bound", "model.embed_dim", "training.phases", "eval.far_levels", "extract.gmm.history"] {
        assert!(text.contains(key), "{key} missing from --help");
    }
    assert!(text.contains("[sampling]") && text.contains("[evaluation]"));
    for cmd in ["extract", "gei", "train", "embed", "eval"] {
        assert!(text.contains(cmd));
    }
}

#[test]
fn unknown_key_and_bad_env_fail_cleanly() {
    let out = gaitkit(&["--set", "sampling.nope=3", "eval", "--manifest", "x", "--embeddings", "y"], &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sampling.nope"));
    let out = gaitkit(&["eval", "--manifest", "x", "--embeddings", "y"], &[("GAITKIT_MODEL__EMBED_DIM", "many")]);
    assert!(!out.status.success());
}

#[test]
fn missing_video_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), 1, 0, 1, 12);
    fs::remove_dir_all(corpus.videos.join("c1_0000")).unwrap();
    let out = gaitkit(
        &["extract", "--manifest", &p(&corpus.manifest), "--videos", &p(&corpus.videos), "--out", &p(&dir.path().join("sil"))],
        &[],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("c1_0000"));
    assert!(!dir.path().join("sil/c1_0000").exists());
    assert!(!dir.path().join("sil/c1_0000.partial").exists());
}

#[test]
fn extract_is_idempotent_and_gei_writes_all_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), 1, 1, 1, 30);
    let out = extracted(&corpus);
    let first = snapshot(&out);
    assert!(first.iter().any(|(f, _)| f == "c1_0000/sequence.json"));
    ok(
        &["--deterministic", "extract", "--manifest", &p(&corpus.manifest), "--videos", &p(&corpus.videos), "--out", &p(&out)],
        &[],
    );
    assert_eq!(first, snapshot(&out));

    let geis = dir.path().join("gei");
    ok(&["gei", "--manifest", &p(&corpus.manifest), "--silhouettes", &p(&out), "--out", &p(&geis)], &[]);
    let sidecar: serde_json::Value = serde_json::from_str(&fs::read_to_string(geis.join("c1_0001/gei.json")).unwrap()).unwrap();
    assert_eq!(sidecar["cluster"].as_array().unwrap().len(), 7);
    assert!(!sidecar["piecewise"].as_array().unwrap().is_empty());
    assert!(geis.join("c1_0001/gei_full.png16").is_file());
}

#[test]
fn train_resume_embed_eval() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), 2, 2, 2, 20);
    let sil = extracted(&corpus);
    let train = |run_dir: &Path, extra: &[&str]| {
        let mut args: Vec<String> = ["--deterministic", "train", "--manifest", &p(&corpus.manifest), "--silhouettes", &p(&sil), "--run", &p(run_dir)]
            .map(String::from)
            .to_vec();
        args.extend(extra.iter().map(|s| s.to_string()));
        run(tiny(args))
    };

    let straight = dir.path().join("straight");
    train(&straight, &[]);
    let split = dir.path().join("split");
    train(&split, &["--max-iterations", "4"]);
    let refused = gaitkit(
        &tiny(["train", "--manifest", &p(&corpus.manifest), "--silhouettes", &p(&sil), "--run", &p(&split)].map(String::from).to_vec())
            .iter()
            .map(String::as_str)
            .collect::<Vec<_>>(),
        &[],
    );
    assert!(!refused.status.success(), "a fresh run must not overwrite an existing one");
    train(&split, &["--resume"]);

    let a = fs::read(resolve_checkpoint(&straight).unwrap()).unwrap();
    let b = fs::read(resolve_checkpoint(&split).unwrap()).unwrap();
    assert_eq!(a, b, "resumed training diverged from the uninterrupted run");
    let (_, state) = load_checkpoint(&resolve_checkpoint(&split).unwrap()).unwrap();
    assert_eq!(state.unwrap().completed, 6);
    let log = fs::read_to_string(split.join("metrics.log")).unwrap();
    assert_eq!(log.lines().filter(|l| !l.starts_with('#')).count(), 6);

    let store = dir.path().join("emb");
    run(tiny(
        ["embed", "--manifest", &p(&corpus.manifest), "--checkpoint", &p(&straight), "--silhouettes", &p(&sil), "--out", &p(&store)]
            .map(String::from)
            .to_vec(),
    ));
    let loaded = EmbeddingStore::load(&store).unwrap();
    assert_eq!(loaded.len(), 4);

    let report_dir = dir.path().join("report");
    fs::create_dir_all(&report_dir).unwrap();
    let text = run(tiny(
        ["eval", "--manifest", &p(&corpus.manifest), "--embeddings", &p(&store), "--out", &p(&report_dir)]
            .map(String::from)
            .to_vec(),
    ));
    assert!(text.contains("rank-1"), "{text}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(report_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["counts"]["probes"], 2);

    let open = run(tiny(
        ["--set", "eval.protocol=open_set_cross_scene", "eval", "--manifest", &p(&corpus.manifest), "--embeddings", &p(&store)]
            .map(String::from)
            .to_vec(),
    ));
    assert!(open.contains("DIR"), "{open}");
}

#[test]
fn environment_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), 2, 0, 2, 16);
    let sil = extracted(&corpus);
    let run_dir = dir.path().join("run");
    let args = tiny_without(
        ["train", "--manifest", &p(&corpus.manifest), "--silhouettes", &p(&sil), "--run", &p(&run_dir)].map(String::from).to_vec(),
        "training.phases",
    );
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(&refs, &[("GAITKIT_TRAINING__PHASES", "[[0.001, 3]]"), ("GAITKIT_TRAINING__CHECKPOINT_EVERY", "100")]);
    let (_, state) = load_checkpoint(&resolve_checkpoint(&run_dir).unwrap()).unwrap();
    assert_eq!(state.unwrap().completed, 3);
}
