//! Command-line behavior end to end on a tiny configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use byel::cli::run;
use byel::exit_code;
use byel::metrics::read_json;
use tempfile::TempDir;

struct Run {
    _tmp: TempDir,
    root: PathBuf,
}

impl Run {
    fn new() -> Self {
        let tmp = TempDir::new().unwrap();
        let root = tmp.path().to_path_buf();
        Self { _tmp: tmp, root }
    }

    fn args(&self, cmd: &[&str]) -> Vec<String> {
        let mut v: Vec<String> = vec!["byel".into()];
        for (flag, path) in [("--data-root", "data"), ("--run-dir", "run")] {
            v.push(flag.into());
            v.push(self.root.join(path).display().to_string());
        }
        for set in [
            "per_class_count_source=6",
            "per_class_count_target=4",
            "pretrain_epochs=3",
            "pretrain_batch_size=12",
            "checkpoint_every=1",
            "transfer_epochs=2",
            "transfer_batch_size=12",
        ] {
            v.push("--set".into());
            v.push(set.into());
        }
        v.extend(cmd.iter().map(|s| s.to_string()));
        v
    }

    fn run(&self, cmd: &[&str]) -> i32 {
        run(self.args(cmd))
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
}

fn read(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn generate_data_is_idempotent_and_counts_match() {
    let r = Run::new();
    assert_eq!(r.run(&["generate-data"]), exit_code::OK);
    let manifest = r.path("data/source.jsonl");
    let first = read(&manifest);
    let modified = fs::metadata(&manifest).unwrap().modified().unwrap();
    assert_eq!(r.run(&["generate-data"]), exit_code::OK);
    assert_eq!(read(&manifest), first);
    assert_eq!(fs::metadata(&manifest).unwrap().modified().unwrap(), modified);

    let source = byel::manifest::load_manifest(&manifest).unwrap();
    let target = byel::manifest::load_manifest(&r.path("data/target.jsonl")).unwrap();
    assert_eq!(byel_core::data::class_distribution(&source), [6; 6]);
    assert_eq!(byel_core::data::class_distribution(&target), [4; 6]);
    for e in source.entries().iter().chain(target.entries()) {
        assert!(r.path("data").join(&e.image).is_file(), "{}", e.image);
    }
}

#[test]
fn missing_artifacts_and_bad_config_have_distinct_codes() {
    let r = Run::new();
    assert_eq!(r.run(&["transfer"]), exit_code::MISSING_ARTIFACT);
    assert_eq!(r.run(&["eval"]), exit_code::MISSING_ARTIFACT);
    assert_eq!(r.run(&["--set", "no_such_key=1", "generate-data"]), exit_code::CONFIG);
    assert_eq!(r.run(&["--set", "pretrain_epochs=0", "generate-data"]), exit_code::CONFIG);
    assert_eq!(r.run(&["--profile", "huge", "generate-data"]), exit_code::CONFIG);
    assert_eq!(r.run(&["no-such-command"]), exit_code::CONFIG);

    let cfg = r.path("bad.json");
    fs::write(&cfg, "{\"image_size\": 32, \"lr\": 0.1}").unwrap();
    assert_eq!(r.run(&["--config", cfg.to_str().unwrap(), "generate-data"]), exit_code::CONFIG);
}

#[test]
fn oracle_eval_scores_one() {
    let r = Run::new();
    assert_eq!(r.run(&["generate-data"]), exit_code::OK);
    assert_eq!(r.run(&["eval", "--debug-oracle"]), exit_code::OK);
    let report: serde_json::Value = read_json(&r.path("run/report/eval.json")).unwrap();
    assert_eq!(report["macro_f1"], 1.0);
    let lines = fs::read_to_string(r.path("run/report/predictions.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 24);
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let r = Run::new();
    for cmd in [&["generate-data"][..], &["pretrain"], &["transfer"], &["eval"]] {
        assert_eq!(r.run(cmd), exit_code::OK, "{cmd:?}");
    }
    for rel in [
        "run/config.json",
        "run/metrics/pretrain.csv",
        "run/metrics/transfer.csv",
        "run/checkpoints/pretrain/latest.json",
        "run/checkpoints/pretrain/epoch_0003/header.json",
        "run/checkpoints/transfer/best.json",
        "run/report/eval.json",
        "run/report/eval.md",
    ] {
        assert!(r.path(rel).is_file(), "{rel}");
    }
    // 36 source images at batch 12: three steps per epoch.
    let rows = byel::metrics::read_pretrain(&r.path("run/metrics/pretrain.csv")).unwrap();
    assert_eq!(rows.len(), 9);
    assert_eq!(rows.last().unwrap().step, 9);
    let transfer = fs::read_to_string(r.path("run/metrics/transfer.csv")).unwrap();
    assert_eq!(transfer.lines().count(), 3);

    // The frozen config reproduces the run when fed back in.
    let frozen = r.path("run/config.json");
    assert_eq!(run(["byel", "--config", frozen.to_str().unwrap(), "eval"]), exit_code::OK);

    let ck = r.path("run/checkpoints/pretrain/epoch_0001");
    assert_eq!(r.run(&["transfer", "--checkpoint", ck.to_str().unwrap()]), exit_code::OK);
    assert_eq!(r.run(&["transfer", "--from-scratch"]), exit_code::OK);
}

#[test]
fn interrupted_pretraining_resumes_bit_exactly() {
    let a = Run::new();
    let b = Run::new();
    for r in [&a, &b] {
        assert_eq!(r.run(&["generate-data"]), exit_code::OK);
    }
    assert_eq!(a.run(&["pretrain"]), exit_code::OK);
    assert_eq!(b.run(&["pretrain", "--stop-after-epoch", "1"]), exit_code::OK);
    assert_eq!(b.run(&["pretrain", "--resume"]), exit_code::OK);

    assert_eq!(read(&a.path("run/metrics/pretrain.csv")), read(&b.path("run/metrics/pretrain.csv")));
    let dir = "run/checkpoints/pretrain/epoch_0003";
    let mut tensors = 0;
    for entry in fs::read_dir(a.path(dir)).unwrap() {
        let name = entry.unwrap().file_name();
        if Path::new(&name).extension().is_some_and(|e| e == "f32") {
            let rel = Path::new(dir).join(&name);
            assert_eq!(read(&a.root.join(&rel)), read(&b.root.join(&rel)), "{}", rel.display());
            tensors += 1;
        }
    }
    assert!(tensors > 0);
}

#[test]
fn resume_rejects_a_changed_config() {
    let r = Run::new();
    assert_eq!(r.run(&["generate-data"]), exit_code::OK);
    assert_eq!(r.run(&["pretrain", "--stop-after-epoch", "1"]), exit_code::OK);
    assert_eq!(r.run(&["--set", "pretrain_lr=0.5", "pretrain", "--resume"]), exit_code::CONFIG);
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_byel");
    assert!(Command::new(bin).arg("--help").stdout(Stdio::null()).status().unwrap().success());
    let tmp = TempDir::new().unwrap();
    let status = Command::new(bin)
        .args(["--run-dir", tmp.path().join("run").to_str().unwrap()])
        .args(["--data-root", tmp.path().join("data").to_str().unwrap()])
        .arg("transfer")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(exit_code::MISSING_ARTIFACT));
}
