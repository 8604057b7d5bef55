use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_treeinf")).args(args).current_dir(dir).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn stump_model(dir: &Path) {
    std::fs::write(dir.join("stump.json"), r#"{"n_trees": 1, "max_leaves": 2, "min_leaf_size": 1, "eta": 1.0, "lambda": 0.0}"#).unwrap();
    ok(dir, &["train", "--data", "bundled:stump", "--config", "stump.json", "--out", "model.json"]);
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["--help"][..], &["--version"], &["experiment", "--help"]] {
        let out = run(dir.path(), args);
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["bogus"][..],
        &["train", "--data", "bundled:stump"],
        &["influence", "--model", "m.json", "--data", "d.csv", "--estimator", "nope", "--target-id", "0", "--out", "-"],
    ] {
        let out = run(dir.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    let out = run(dir.path(), &["synth", "--generator", "nope", "--n", "5", "--out", "-"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("planted"));
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["train", "--data", "missing.csv", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(dir.path(), &["train", "--data", "bundled:nope", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diabetes"));
}

#[test]
fn stump_influence_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    stump_model(dir.path());
    let csv = ok(
        dir.path(),
        &["influence", "--model", "model.json", "--data", "bundled:stump", "--estimator", "boostin", "--target-id", "1", "--out", "-"],
    );
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "estimator,target_id,train_id,value");
    assert_eq!(lines[1], "boostin,1,0,-0.5");
    assert_eq!(lines[2], "boostin,1,1,0.5");
}

#[test]
fn influence_rejects_foreign_training_data() {
    let dir = tempfile::tempdir().unwrap();
    stump_model(dir.path());
    let out = run(
        dir.path(),
        &["influence", "--model", "model.json", "--data", "bundled:iris", "--estimator", "boostin", "--target-id", "0", "--out", "-"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn experiment_protocol_flag_must_agree_with_spec() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("spec.json"),
        r#"{"protocol": "multi_removal", "datasets": [{"bundled": "stump"}]}"#,
    )
    .unwrap();
    let out = run(dir.path(), &["experiment", "--protocol", "single_removal", "--spec", "spec.json", "--out", "-"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("protocol"));
}

#[test]
fn targeted_edit_rejects_estimators_without_edits() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--generator", "planted", "--n", "80", "--out", "d.csv"]);
    std::fs::write(
        dir.path().join("spec.json"),
        r#"{"datasets": [{"csv": {"path": "d.csv"}}], "estimators": ["loss"], "n_targets": 2}"#,
    )
    .unwrap();
    let out = run(dir.path(), &["experiment", "--protocol", "targeted_edit", "--spec", "spec.json", "--out", "-"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("loss"));
}

#[test]
fn experiment_writes_report_directory() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--generator", "planted", "--n", "120", "--out", "d.csv"]);
    std::fs::write(
        dir.path().join("spec.json"),
        r#"{"datasets": [{"csv": {"path": "d.csv"}}], "n_targets": 3,
            "model_configs": [{"name": "small", "config": {"n_trees": 5}}]}"#,
    )
    .unwrap();
    ok(dir.path(), &["experiment", "--protocol", "single_removal", "--spec", "spec.json", "--out", "out"]);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["protocol"], "single_removal");
    assert!(summary["ranking"]["entries"].as_array().unwrap().len() == 2);
    let csv = std::fs::read_to_string(dir.path().join("out/d__small.csv")).unwrap();
    assert!(csv.starts_with("checkpoint_fraction,estimator,seed,metric,value"));
    assert!(dir.path().join("out/d__small__delta_loss.dat").exists());
}

#[test]
fn affinity_reports_full_count_for_the_target_row() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--generator", "friedman", "--n", "60", "--out", "d.csv"]);
    std::fs::write(dir.path().join("c.json"), r#"{"n_trees": 7}"#).unwrap();
    ok(dir.path(), &["train", "--data", "d.csv", "--config", "c.json", "--out", "m.json"]);
    let text = ok(dir.path(), &["affinity", "--model", "m.json", "--data", "d.csv", "--target-id", "3", "--out", "-"]);
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["n_trees"], 7);
    assert_eq!(report["counts"][3], 7);
}
