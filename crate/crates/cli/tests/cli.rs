use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mi-updates"))
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).env_remove("MI_UPDATES_OUT").output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn experiment(instantiation: &str) -> String {
    format!(
        r#"{{
        "schema_version": 1, "seed": 4, "instantiation": {instantiation},
        "population": {{"kind": "gaussian", "classes": 3, "dim": 4, "mean_scale": 1.0}},
        "n0": 60, "n_up": 5,
        "initial": {{"learning_rate": 0.1, "batch_size": 16, "epochs": 3}},
        "attacks": [
            {{"type": "update", "combiner": {{"method": "diff"}}, "score": "loss", "threshold": {{"strategy": "batch"}}}},
            {{"type": "baseline", "kind": "loss"}}
        ],
        "worlds": 3, "points_per_world": 6
    }}"#
    )
}

fn error_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8(o.stderr.clone()).unwrap();
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

#[test]
fn missing_config_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let o = run(&["single", "--config", missing.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let e = error_json(&o);
    assert_eq!(e["error"]["kind"], "config");
    assert!(e["error"]["path"].as_str().unwrap().ends_with("nope.json"));
}

#[test]
fn single_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &experiment(r#"{"type": "single"}"#));
    let out = dir.path().join("out");
    let o = run(&["single", "--config", cfg.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let m = &summary["attacks"][0];
    for key in [
        "attack",
        "trials",
        "accuracy",
        "accuracy_stderr",
        "precision",
        "recall",
        "generic_accuracy",
        "specific_accuracy",
        "counts",
        "epoch_confusion",
        "best",
    ] {
        assert!(m.get(key).is_some(), "missing {key}");
    }
    let trials = std::fs::read_to_string(out.join("trials.jsonl")).unwrap();
    assert_eq!(trials.lines().count(), 3 * 6 * 2);
    let sweep = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3);
    assert!(sweep.starts_with("parameter,value,attack"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 4);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
}

#[test]
fn reruns_are_byte_identical_and_hash_ignores_key_order() {
    let dir = tempfile::tempdir().unwrap();
    let text = experiment(r#"{"type": "single"}"#);
    let cfg = write(dir.path(), "c.json", &text);
    // Same config with the top-level keys in reverse order.
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    let mut pairs: Vec<(String, serde_json::Value)> = value.as_object().unwrap().clone().into_iter().collect();
    pairs.reverse();
    let reordered = format!(
        "{{{}}}",
        pairs
            .iter()
            .map(|(k, v)| format!("{}: {v}", serde_json::Value::String(k.clone())))
            .collect::<Vec<_>>()
            .join(", ")
    );
    let cfg2 = write(dir.path(), "c2.json", &reordered);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&["single", "--config", cfg.to_str().unwrap()], &a).status.success());
    assert!(run(&["single", "--config", cfg2.to_str().unwrap(), "--workers", "1"], &b).status.success());
    for f in ["trials.jsonl", "summary.json", "sweep.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let hash = |d: &Path| -> String {
        let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("manifest.json")).unwrap()).unwrap();
        m["config_hash"].as_str().unwrap().to_string()
    };
    assert_eq!(hash(&a), hash(&b));
}

#[test]
fn seed_override_changes_trials() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &experiment(r#"{"type": "single"}"#));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&["single", "--config", cfg.to_str().unwrap()], &a).status.success());
    assert!(run(&["single", "--config", cfg.to_str().unwrap(), "--seed", "99"], &b).status.success());
    assert_ne!(std::fs::read(a.join("trials.jsonl")).unwrap(), std::fs::read(b.join("trials.jsonl")).unwrap());
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &experiment(r#"{"type": "single"}"#));
    let out = dir.path().join("env-out");
    let o = bin()
        .args(["single", "--config", cfg.to_str().unwrap()])
        .env("MI_UPDATES_OUT", &out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(out.join("summary.json").exists());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let multi1 = write(dir.path(), "m.json", &experiment(r#"{"type": "multi", "k": 1}"#));
    let o = run(&["multi", "--config", multi1.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(error_json(&o)["error"]["message"].as_str().unwrap().contains("k >= 2"));

    let single = write(dir.path(), "s.json", &experiment(r#"{"type": "single"}"#));
    let o = run(&["multi", "--config", single.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));

    let typo = experiment(r#"{"type": "single"}"#).replace("\"worlds\"", "\"wrolds\"");
    let bad = write(dir.path(), "t.json", &typo);
    let o = run(&["single", "--config", bad.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(error_json(&o)["error"]["message"].as_str().unwrap().contains("wrolds"));
}

#[test]
fn runtime_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = experiment(r#"{"type": "single"}"#).replace(
        r#"{"kind": "gaussian", "classes": 3, "dim": 4, "mean_scale": 1.0}"#,
        r#"{"kind": "csv", "path": "missing.csv", "label_column": "y"}"#,
    );
    let cfg = write(dir.path(), "c.json", &text);
    let o = run(&["single", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_json(&o)["error"]["kind"], "runtime");
}

#[test]
fn multi_and_shift_commands() {
    let dir = tempfile::tempdir().unwrap();
    let multi = write(dir.path(), "m.json", &experiment(r#"{"type": "multi", "k": 3}"#));
    let out = dir.path().join("m");
    assert!(run(&["multi", "--config", multi.to_str().unwrap()], &out).status.success());
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["k"], 3);

    let shift = experiment(
        r#"{"type": "shift", "alpha": 0.5, "target": {"kind": "gaussian", "classes": 3, "dim": 4, "mean_scale": 2.0, "means_seed": 8}}"#,
    )
    .replace(r#""worlds": 3"#, r#""worlds": 3, "sweep": {"parameter": "alpha", "values": [0.0, 0.5, 1.0]}"#);
    let shift = write(dir.path(), "s.json", &shift);
    let out = dir.path().join("s");
    assert!(run(&["shift", "--config", shift.to_str().unwrap()], &out).status.success());
    let sweep = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 3 * 2);
}

#[test]
fn mean_lab_emits_one_row_per_n1_per_attack() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "m.json",
        r#"{"n0": 200, "d": 250, "mu": 0.0, "sigma": 0.1, "n1_values": [10, 25, 50], "trials": 3}"#,
    );
    let out = dir.path().join("out");
    assert!(run(&["mean-lab", "--config", cfg.to_str().unwrap()], &out).status.success());
    let csv = std::fs::read_to_string(out.join("mean_lab.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "n1,attack,trials,accuracy,stderr");
    assert_eq!(csv.lines().count(), 1 + 3 * 2);
}

#[test]
fn dp_audit_emits_per_sigma_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut inner: serde_json::Value = serde_json::from_str(&experiment(r#"{"type": "single"}"#)).unwrap();
    inner["update"] = serde_json::json!({"kind": "sgd_new", "config": {"learning_rate": 0.1, "batch_size": 5, "epochs": 3}});
    // The audit supplies its own attack.
    inner["attacks"] = serde_json::json!([]);
    let cfg = serde_json::json!({"experiment": inner, "noise_multipliers": [0.5, 8.0]});
    let path = write(dir.path(), "dp.json", &cfg.to_string());
    let out = dir.path().join("out");
    let o = run(&["dp-audit", "--config", path.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let audit: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("audit.json")).unwrap()).unwrap();
    let rows = audit.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        for key in ["noise_multiplier", "epsilon", "precision", "precision_lower", "epsilon_lower", "trials"] {
            assert!(r.get(key).is_some(), "missing {key}");
        }
    }
    assert_eq!(std::fs::read_to_string(out.join("audit.csv")).unwrap().lines().count(), 3);
}

#[test]
fn example_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["single", "multi", "shift_hard", "shift_easy"] {
        let text = std::fs::read_to_string(root.join(format!("{name}.json"))).unwrap();
        mi_updates::experiment::ExperimentConfig::from_json(&text)
            .unwrap()
            .validate()
            .unwrap();
    }
    mi_updates::mean_lab::MeanLabConfig::from_json(&std::fs::read_to_string(root.join("mean_lab.json")).unwrap()).unwrap();
    mi_updates::dp_audit::DpAuditConfig::from_json(&std::fs::read_to_string(root.join("dp_audit.json")).unwrap())
        .unwrap()
        .validate()
        .unwrap();
}
