use std::path::Path;
use std::process::Command;

fn daeme() -> Command {
    Command::new(env!("CARGO_BIN_EXE_daeme"))
}

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    let text = format!(
        r#"{{
  "corpus": {{"n_train": 16, "n_test": 1, "snr_grid": [-5.0, 0.0, 15.0, 20.0],
              "train_duration_s": [0.6, 0.8], "test_duration_s": 1.0}},
  "plan": "uat2",
  "component": {{"train": {{"epochs": 1}}}},
  "metrics": ["STOI"]{extra}
}}"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn staged_commands_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("run");
    let status = |args: &[&str]| {
        daeme()
            .args(args)
            .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "7", "--jobs", "1"])
            .output()
            .unwrap()
    };
    let o = status(&["corpus"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("corpus/manifest.json").exists());
    assert!(status(&["tree", "--resume"]).status.success());
    assert!(out.join("tree/tree.json").exists());
    let o = status(&["report", "--resume"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("stoi"));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 7);
    // Corpus and tree were reused.
    let stages = report["stage_seconds"].as_object().unwrap();
    assert!(!stages.contains_key("corpus") && !stages.contains_key("tree") && stages.contains_key("components"));
    assert!(out.join("tables/stoi.csv").exists());
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let o = daeme().args(["report", "--config", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let cfg = write_config(dir.path(), r#", "metrics": []"#);
    let o = daeme().args(["corpus", "--config", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = daeme().args(["ablation", "--suite", "bogus"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stage_failures_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let cfg = dir.path().join("ingest.json");
    let text = format!(r#"{{"corpus": {{"ingest": {{"clean_dir": "{0}", "noisy_dir": "{0}"}}}}}}"#, empty.display());
    std::fs::write(&cfg, text).unwrap();
    let o = daeme()
        .args(["corpus", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("run").to_str().unwrap()])
        .output()
        .unwrap();
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(o.status.code(), Some(3), "{err}");
    assert!(err.contains("stage `corpus` failed"), "{err}");
}
