mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::write_disk_dataset;
use retina_pipeline::cascade::{build_default_tree, save_tree, CascadeNode};
use retina_pipeline::modelkit::{save_checkpoint, BackboneSpec, Classifier, ModelSpec};
use retina_pipeline::trainer::Phase;
use retina_pipeline::TaskKind;
use serde_json::{json, Value};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_retina-pipeline")).args(args).output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, cfg: Value) -> PathBuf {
    let path = dir.join("experiment.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn base_config(task: &str) -> Value {
    json!({
        "task": task,
        "backbone": {"name": "toy", "input_size": 32},
        "seed": 5,
        "paths": {"manifest": "train.csv", "image_dir": "images", "output_dir": "out"},
        "trainer": {"batch_size": 8, "max_epochs": 1},
        "head": {"hidden_widths": [8]}
    })
}

fn step(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", stderr(&out));
}

#[test]
fn missing_image_is_a_data_error_naming_the_id() {
    let tmp = tempfile::tempdir().unwrap();
    write_disk_dataset(tmp.path(), 12, &[0, 2], 1);
    fs::remove_file(tmp.path().join("images/img0007.png")).unwrap();
    let cfg = write_config(tmp.path(), base_config("binary"));
    let out = run(&["prepare", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("img0007"), "{}", stderr(&out));
}

#[test]
fn unsupported_backbone_size_is_rejected_before_touching_data() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = base_config("binary");
    cfg["backbone"] = json!({"name": "vgg16", "input_size": 299});
    cfg["paths"]["manifest"] = json!("does-not-exist.csv");
    let cfg = write_config(tmp.path(), cfg);
    let out = run(&["prepare", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = base_config("binary");
    cfg["trainer"]["epochs"] = json!(3);
    let cfg = write_config(tmp.path(), cfg);
    assert_eq!(run(&["prepare", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn evaluate_without_checkpoint_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    write_disk_dataset(tmp.path(), 20, &[0, 2], 2);
    let cfg = write_config(tmp.path(), base_config("binary"));
    let cfg = cfg.to_str().unwrap();
    step(&["prepare", "--config", cfg]);
    let out = run(&["evaluate", "--config", cfg]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn prepare_five_grades_balances_training_counts() {
    let tmp = tempfile::tempdir().unwrap();
    write_disk_dataset(tmp.path(), 40, &[0, 0, 0, 1, 2, 2, 3, 4], 3);
    let cfg = write_config(tmp.path(), base_config("five"));
    step(&["prepare", "--config", cfg.to_str().unwrap()]);
    let table = fs::read_to_string(tmp.path().join("out/splits/class_distribution.csv")).unwrap();
    let rows: Vec<Vec<usize>> = table
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 5);
    let after: Vec<usize> = rows.iter().map(|r| r[2]).collect();
    assert!(after.iter().all(|&n| n == after[0] && n > 0), "{after:?}");
    assert!(rows.iter().map(|r| r[1]).sum::<usize>() < after.iter().sum::<usize>());
}

#[test]
fn phase_two_logs_the_reduced_learning_rate() {
    let tmp = tempfile::tempdir().unwrap();
    write_disk_dataset(tmp.path(), 30, &[0, 2], 4);
    let mut cfg = base_config("binary");
    cfg["phase"] = json!("two");
    let cfg = write_config(tmp.path(), cfg);
    let cfg = cfg.to_str().unwrap();
    step(&["prepare", "--config", cfg]);
    step(&["train", "--config", cfg]);
    let log = fs::read_to_string(tmp.path().join("out/train_log.jsonl")).unwrap();
    let first: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert!((first["learning_rate"].as_f64().unwrap() - 1e-4).abs() < 1e-15);
}

#[test]
fn set_overrides_config_keys() {
    let tmp = tempfile::tempdir().unwrap();
    write_disk_dataset(tmp.path(), 30, &[0, 2], 6);
    let cfg = write_config(tmp.path(), base_config("binary"));
    let cfg = cfg.to_str().unwrap();
    step(&["prepare", "--config", cfg, "--set", "paths.output_dir=other"]);
    step(&["--jobs", "2", "train", "--config", cfg, "--set", "paths.output_dir=other", "--set", "trainer.max_epochs=2"]);
    let log = fs::read_to_string(tmp.path().join("other/train_log.jsonl")).unwrap();
    assert!(log.lines().count() <= 2 && log.lines().count() >= 1);
    assert!(!tmp.path().join("out").exists());
}

fn node_models(tree: &mut CascadeNode, dir: &Path, skip: Option<&str>) {
    let spec = ModelSpec::new(BackboneSpec::toy(32), TaskKind::Binary, &[8]).unwrap();
    if skip != Some(tree.id.as_str()) {
        let model = Classifier::new(spec, 9).unwrap();
        save_checkpoint(&model, Phase::One, None, &dir.join("nodes"), &tree.id).unwrap();
    }
    tree.model_ref = Some(PathBuf::from(format!("nodes/{}.json", tree.id)));
    for child in [&mut tree.left, &mut tree.right].into_iter().flatten() {
        node_models(child, dir, skip);
    }
}

#[test]
fn cascade_reports_five_grades_and_names_missing_nodes() {
    let tmp = tempfile::tempdir().unwrap();
    write_disk_dataset(tmp.path(), 40, &[0, 1, 2, 3, 4], 8);
    let cfg = write_config(tmp.path(), base_config("five"));
    let cfg = cfg.to_str().unwrap();
    step(&["prepare", "--config", cfg]);

    let mut tree = build_default_tree();
    node_models(&mut tree.root, tmp.path(), None);
    let cascade_file = tmp.path().join("cascade.json");
    save_tree(&tree, &cascade_file).unwrap();
    step(&["cascade", "--config", cfg, "--cascade", cascade_file.to_str().unwrap()]);
    let confusion = fs::read_to_string(tmp.path().join("out/cascade/confusion.csv")).unwrap();
    let lines: Vec<&str> = confusion.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(lines.iter().all(|l| l.split(',').count() == 6));
    assert!(tmp.path().join("out/cascade/metrics_table.csv").is_file());

    let other = tempfile::tempdir().unwrap();
    let mut tree = build_default_tree();
    node_models(&mut tree.root, other.path(), Some("mild_vs_moderate"));
    let cascade_file = other.path().join("cascade.json");
    save_tree(&tree, &cascade_file).unwrap();
    let out = run(&["cascade", "--config", cfg, "--cascade", cascade_file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("mild_vs_moderate"), "{}", stderr(&out));
}

#[test]
fn report_prints_the_six_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    write_disk_dataset(tmp.path(), 30, &[0, 2], 10);
    let cfg = write_config(tmp.path(), base_config("binary"));
    let cfg = cfg.to_str().unwrap();
    for cmd in ["prepare", "train", "evaluate"] {
        step(&[cmd, "--config", cfg]);
    }
    let out = run(&["report", "--config", cfg, "--reference"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in retina_pipeline::metrics::TABLE_METRICS {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
    assert!(text.contains("Reference"));
}
