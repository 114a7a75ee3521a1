use std::path::Path;
use std::process::{Command, Output};

use taskgrasp_cli::config::Config;
use taskgrasp_cli::demo;

fn taskgrasp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taskgrasp"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("running taskgrasp")
}

#[test]
fn demo_config_round_trips() {
    let cfg = demo::demo_config();
    assert_eq!(Config::parse(&cfg.to_toml().unwrap()).unwrap(), cfg);
}

#[test]
fn unknown_config_keys_are_rejected() {
    assert!(Config::parse("seed = 1\n[models]\nbogus = 2\n").is_err());
}

#[test]
fn init_demo_writes_models_tasks_and_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = taskgrasp(tmp.path(), &["init-demo", "--out", "demo"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for (id, _) in demo::screw_variants() {
        assert!(tmp.path().join(format!("demo/models/{id}.obj")).is_file());
        assert!(tmp.path().join(format!("demo/tasks/{id}.json")).is_file());
    }
    let cfg = Config::load(&tmp.path().join("demo/config.toml")).unwrap();
    assert_eq!(cfg, demo::demo_config());
}

#[test]
fn missing_inputs_exit_with_code_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = taskgrasp(tmp.path(), &["build-canonical", "--models", "nowhere", "--out", "canon"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    assert!(!tmp.path().join("canon").exists());
}

#[test]
fn plan_without_heatmap_needs_no_affordance() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert!(taskgrasp(d, &["init-demo", "--out", "."]).status.success());
    assert!(taskgrasp(d, &["--config", "config.toml", "build-canonical", "--models", "models", "--out", "canon"]).status.success());
    // An empty codebook file is enough to reach the heatmap check.
    let out = taskgrasp(d, &["plan", "--scene", "none", "--canonical", "canon", "--codebook", "none.json", "--out", "p.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!d.join("p.json").exists());
}
