use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
synthetic_rows = 200
seed = 7
k_folds = 3

[hyperparams]
lstm_units = 4
dense_units = 8
kan_units_1 = 8
kan_units_2 = 4
qdense_units_1 = 4
qdense_units_2 = 8
qdense_units_out = 8
conv_filters = 4
n_qubits = 2
quantum_layers = 1
grid_size = 3
join_units = 8

[train]
max_epochs = 2
learning_rate = 0.01

[explain]
instances = 1
background = 10
lime_samples = 200
shapley_permutations = 50
"#;

fn kacq(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    if !cfg.exists() {
        std::fs::write(&cfg, SMALL).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_kacq"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(o: &Output) {
    assert_eq!(o.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_kacq"))
            .args(args)
            .current_dir(d.path())
            .output()
            .unwrap()
            .status
            .code()
    };
    assert_eq!(code(&["--help"]), Some(0));
    assert_eq!(code(&["frobnicate"]), Some(1));
    assert_eq!(code(&["train"]), Some(1));
    assert_eq!(code(&["train", "--data", "missing.csv"]), Some(1));
    assert_eq!(code(&["train", "--synthetic", "50", "--model", "nope"]), Some(1));
    assert_eq!(code(&["evaluate", "--synthetic", "50", "--checkpoint", "nowhere"]), Some(1));
    std::fs::write(d.path().join("bad.toml"), "colour = 3\n").unwrap();
    assert_eq!(code(&["train", "--config", "bad.toml"]), Some(1));
}

#[test]
fn train_then_evaluate_is_bitwise_and_manifested() {
    let d = tempfile::tempdir().unwrap();
    ok(&kacq(d.path(), &["train", "--out", "t"]));
    for f in ["report.json", "history.csv", "roc.csv", "calibration.csv", "predictions.csv", "checkpoint/weights.bin"] {
        assert!(d.path().join("t").join(f).is_file(), "{f}");
    }
    ok(&kacq(d.path(), &["evaluate", "--checkpoint", "t/checkpoint", "--out", "e"]));
    assert_eq!(read(d.path().join("t/report.json")), read(d.path().join("e/report.json")));

    let m: serde_json::Value = serde_json::from_str(&read(d.path().join("e/manifest.json"))).unwrap();
    assert_eq!(m["command"], "evaluate");
    assert_eq!(m["seed"], 7);
    let inputs = m["inputs"].as_array().unwrap();
    assert!(inputs.iter().any(|i| i["path"] == "synthetic:200:7"));
    let w = inputs.iter().find(|i| i["path"].as_str().unwrap().ends_with("weights.bin")).unwrap();
    let bytes = std::fs::read(d.path().join("t/checkpoint/weights.bin")).unwrap();
    assert_eq!(w["bytes"], bytes.len() as u64);
    assert_eq!(w["sha256"].as_str().unwrap().len(), 64);

    // different data against the same checkpoint is a runtime error
    let o = kacq(d.path(), &["evaluate", "--checkpoint", "t/checkpoint", "--synthetic", "201", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn repeated_runs_are_identical() {
    let d = tempfile::tempdir().unwrap();
    ok(&kacq(d.path(), &["train", "--out", "a", "--threads", "1"]));
    ok(&kacq(d.path(), &["train", "--out", "b"]));
    for f in ["report.json", "history.csv", "predictions.csv", "manifest.json"] {
        let a = read(d.path().join("a").join(f));
        let b = read(d.path().join("b").join(f));
        if f == "manifest.json" {
            // the thread count and out dir are part of the recorded config
            let strip = |s: &str| {
                let mut v: serde_json::Value = serde_json::from_str(s).unwrap();
                v["config"]["threads"] = 0.into();
                v["config"]["out"] = "".into();
                v
            };
            assert_eq!(strip(&a), strip(&b));
        } else {
            assert_eq!(a, b, "{f}");
        }
    }
    assert_eq!(
        std::fs::read(d.path().join("a/checkpoint/weights.bin")).unwrap(),
        std::fs::read(d.path().join("b/checkpoint/weights.bin")).unwrap()
    );
}

#[test]
fn ablation_table_has_every_variant() {
    let d = tempfile::tempdir().unwrap();
    ok(&kacq(d.path(), &["ablate", "--epochs", "1", "--out", "ab"]));
    let csv = read(d.path().join("ab/ablation.csv"));
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&header[..2], ["variant", "params"]);
    for col in ["accuracy", "roc_auc", "mcc", "kappa"] {
        assert!(header.contains(&col), "{col}");
    }
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 10);
    for r in rows {
        assert_eq!(r.split(',').count(), header.len());
    }
}

#[test]
fn ttest_from_scores_has_nine_df_for_ten_folds() {
    let d = tempfile::tempdir().unwrap();
    let mut s = String::from("kacq_dcnn,bilstm,qdense\n");
    for i in 0..10 {
        let f = i as f64;
        s += &format!("{},{},{}\n", 0.92 + 0.001 * f, 0.90 + 0.0013 * (f % 3.0), 0.91 + 0.0007 * (f % 4.0));
    }
    std::fs::write(d.path().join("folds.csv"), s).unwrap();
    ok(&kacq(d.path(), &["ttest", "--scores", "folds.csv", "--out", "tt"]));
    let v: serde_json::Value = serde_json::from_str(&read(d.path().join("tt/ttest.json"))).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert_eq!(r["df"], 9);
        assert!((r["corrected_level"].as_f64().unwrap() - 0.025).abs() < 1e-15);
    }
}

#[test]
fn crossval_and_vqc_benchmark() {
    let d = tempfile::tempdir().unwrap();
    ok(&kacq(d.path(), &["crossval", "--model", "logistic", "--out", "cv"]));
    let csv = read(d.path().join("cv/crossval.csv"));
    // three folds plus mean and std rows
    assert_eq!(csv.lines().count(), 1 + 3 + 2);

    ok(&kacq(d.path(), &["benchmark-vqc", "--epochs", "1", "--qubits", "4", "--out", "vq"]));
    let csv = read(d.path().join("vq/vqc_benchmark.csv"));
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 12);
    for a in ["mera", "mps", "ttn"] {
        assert_eq!(rows.iter().filter(|r| r.starts_with(a)).count(), 4);
    }
}

#[test]
fn conformal_and_explain_from_checkpoint() {
    let d = tempfile::tempdir().unwrap();
    ok(&kacq(d.path(), &["train", "--out", "t"]));
    ok(&kacq(d.path(), &["conformal", "--checkpoint", "t/checkpoint", "--alpha", "0.1,0.2", "--out", "c"]));
    let v: serde_json::Value = serde_json::from_str(&read(d.path().join("c/conformal.json"))).unwrap();
    assert!(!v.as_array().unwrap().is_empty());
    ok(&kacq(d.path(), &["explain", "--checkpoint", "t/checkpoint", "--out", "x"]));
    assert!(d.path().join("x/explanations.csv").is_file());
}
