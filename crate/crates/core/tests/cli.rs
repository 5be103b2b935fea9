use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const REGRESSION: &str = r#"
seed = 5

[data]
source = { kind = "heteroscedastic", n = 300 }
split = [0.6, 0.2, 0.2]

[network]
hidden = [8]

[train]
epochs = 2
batch_size = 32

[compare]
latency_samples = 5

[bench]
samples = 5
repetitions = 1

[sweep]
alphas = [0.0, 0.5, 1.0]

[gp]
max_points = 100
"#;

const BLOBS: &str = r#"
seed = 2

[data]
source = { kind = "blobs", n = 300, classes = 3, separation = 3.0 }
split = [0.6, 0.2, 0.2]

[network]
hidden = [8]

[train]
epochs = 200

[compare]
methods = ["rdeepsense", "mcdrop-3", "ssp-2"]
latency_samples = 5
"#;

fn run(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_uqnet"));
    cmd.current_dir(dir).args(args).arg("--quiet");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args, &[]);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn setup(config: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

/// Payload files (everything except `*.meta.*`) keyed by relative path.
fn payloads(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, acc: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, acc);
            } else if !path.file_name().unwrap().to_string_lossy().contains(".meta.") {
                acc.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    let mut acc = BTreeMap::new();
    walk(root, root, &mut acc);
    acc
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_train_eval_pipeline() {
    let dir = setup(REGRESSION);
    let d = dir.path();
    ok(d, &["--config", "run.toml", "--out", "gen", "gen"]);
    ok(d, &["--config", "run.toml", "--out", "model", "train"]);
    ok(d, &["--config", "run.toml", "--out", "eval", "eval", "--checkpoint", "model/model.json"]);

    let train = json(&d.join("model/train_report.json"));
    let report = json(&d.join("eval/report.json"));
    assert_eq!(report["method"], "rdeepsense");
    assert_eq!(report["samples"], 60);
    assert_eq!(report["config_digest"], train["config_digest"]);
    assert_eq!(report["model_digest"], train["model_digest"]);
    assert_eq!(report["coverage"].as_array().unwrap().len(), 13);
    let checkpoint = json(&d.join("model/model.json"));
    assert_eq!(checkpoint["config_digest"], train["config_digest"]);
    let csv = fs::read_to_string(d.join("eval/report.csv")).unwrap();
    assert!(csv.starts_with("# config_digest="));
    assert!(csv.contains("rdeepsense,deviation_area,"));
    assert!(d.join("eval/report.curve.csv").is_file());
    assert_eq!(fs::read_to_string(d.join("gen/train.csv")).unwrap().lines().count(), 2 + 180);
}

#[test]
fn every_command_is_byte_identical_on_rerun() {
    let dir = setup(REGRESSION);
    let d = dir.path();
    ok(d, &["--config", "run.toml", "--out", "model", "train"]);
    let commands: Vec<Vec<&str>> = vec![
        vec!["gen"],
        vec!["train"],
        vec!["train", "--method", "ssp-2"],
        vec!["eval", "--checkpoint", "model/model.json", "--method", "rdeepsense-mc3"],
        vec!["compare"],
        vec!["bench", "--checkpoint", "model/model.json", "--methods", "rdeepsense,mcdrop-3"],
        vec!["sweep-alpha"],
    ];
    for (i, cmd) in commands.iter().enumerate() {
        let a = format!("a{i}");
        let b = format!("b{i}");
        let mut args = vec!["--config", "run.toml", "--out", a.as_str()];
        args.extend(cmd);
        ok(d, &args);
        args[3] = b.as_str();
        // A different worker count must not change anything.
        let out = run(d, &args, &[("UQNET_WORKERS", "1")]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let (pa, pb) = (payloads(&d.join(&a)), payloads(&d.join(&b)));
        assert!(!pa.is_empty());
        assert_eq!(pa, pb, "{cmd:?} is not reproducible");
        assert!(d.join(&a).join("run.meta.json").is_file());
    }
}

#[test]
fn compare_covers_every_method_and_gp() {
    let dir = setup(REGRESSION);
    let d = dir.path();
    ok(d, &["--config", "run.toml", "--out", "cmp", "compare"]);
    let doc = json(&d.join("cmp/compare.json"));
    let methods: Vec<&str> = doc["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["method"].as_str().unwrap())
        .collect();
    let mut expected: Vec<&str> = uqnet::cli::DEFAULT_COMPARE_METHODS.to_vec();
    expected.push("gp");
    assert_eq!(methods, expected);
    assert_eq!(methods.len(), 14);
    for row in doc["rows"].as_array().unwrap() {
        if let Some(k) = row["passes_per_prediction"].as_u64() {
            let m: uqnet::inference::MethodSpec = row["method"].as_str().unwrap().parse().unwrap();
            assert_eq!(k as usize, m.passes());
        }
        assert!(d.join("cmp/curves").join(format!("{}.csv", row["method"].as_str().unwrap())).is_file());
    }
    let latency = fs::read_to_string(d.join("cmp/latency.meta.csv")).unwrap();
    assert_eq!(latency.lines().count(), 2 + 13);
}

#[test]
fn classification_compare_skips_gp_with_a_note() {
    let dir = setup(BLOBS);
    let d = dir.path();
    ok(d, &["--config", "run.toml", "--out", "cmp", "compare"]);
    let doc = json(&d.join("cmp/compare.json"));
    assert_eq!(doc["rows"].as_array().unwrap().len(), 3);
    assert!(doc["notes"][0].as_str().unwrap().contains("gp skipped"));
    let c = &doc["rows"][0]["report"]["classification"];
    assert!(c["accuracy"].as_f64().unwrap() > 0.5);
    assert!(doc["rows"][0]["report"].get("coverage").is_none());
}

#[test]
fn ensemble_checkpoint_round_trips() {
    let dir = setup(REGRESSION);
    let d = dir.path();
    ok(d, &["--config", "run.toml", "--out", "ens", "train", "--method", "ssp-3"]);
    let manifest = json(&d.join("ens/ensemble.json"));
    assert_eq!(manifest["members"].as_array().unwrap().len(), 3);
    ok(d, &["--config", "run.toml", "--out", "ev", "eval", "--checkpoint", "ens/ensemble.json"]);
    assert_eq!(json(&d.join("ev/report.json"))["method"], "ssp-3");
    ok(d, &["--config", "run.toml", "--out", "ev1", "eval", "--checkpoint", "ens/ensemble.json", "--method", "ssp-1"]);

    // A tampered member no longer matches the manifest digest.
    let member = d.join("ens/member-01.json");
    let text = fs::read_to_string(&member).unwrap();
    let mut ck: Value = serde_json::from_str(&text).unwrap();
    ck["params"]["biases"][0][0] = Value::from(123.0);
    fs::write(&member, serde_json::to_string(&ck).unwrap()).unwrap();
    let out = run(d, &["--config", "run.toml", "--out", "ev2", "eval", "--checkpoint", "ens/ensemble.json"], &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: checkpoint:"));
}

fn assert_single_line_error(out: &Output, category: &str) {
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.starts_with(&format!("error: {category}: ")), "{stderr}");
}

#[test]
fn invalid_inputs_fail_fast_without_outputs() {
    let dir = setup(&format!("{REGRESSION}\n[extra]\nkey = 1\n"));
    let d = dir.path();
    for cmd in ["gen", "train", "compare", "sweep-alpha"] {
        let out = run(d, &["--config", "run.toml", "--out", "never", cmd], &[]);
        assert_single_line_error(&out, "config");
        assert!(!d.join("never").exists());
    }

    fs::write(d.join("bad_alpha.toml"), REGRESSION.replace("[sweep]", "[loss]\nalpha = 2.0\n\n[sweep]")).unwrap();
    let out = run(d, &["--config", "bad_alpha.toml", "--out", "never", "train"], &[]);
    assert_single_line_error(&out, "validation");

    fs::write(d.join("ok.toml"), REGRESSION).unwrap();
    let out = run(d, &["--config", "ok.toml", "--out", "never", "eval", "--checkpoint", "missing.json"], &[]);
    assert_single_line_error(&out, "io");
    let out = run(d, &["--config", "ok.toml", "--out", "never", "train", "--method", "mcdrop-1"], &[]);
    assert_single_line_error(&out, "usage");
    let out = run(d, &["--config", "ok.toml", "--out", "never", "gen"], &[("UQNET_WORKERS", "0")]);
    assert_single_line_error(&out, "config");
    let out = run(d, &["--out", "never", "gen"], &[]);
    assert_single_line_error(&out, "config");
    assert!(!d.join("never").exists());

    ok(d, &["--config", "ok.toml", "--out", "m", "train"]);
    let out = run(d, &["--config", "ok.toml", "--out", "never", "eval", "--checkpoint", "m/model.json", "--method", "ssp-2"], &[]);
    assert_single_line_error(&out, "validation");
    let out = run(d, &["--config", "ok.toml", "--out", "never", "eval", "--checkpoint", "m/model.json"], &[]);
    assert!(out.status.success());
    fs::write(d.join("blobs.toml"), BLOBS).unwrap();
    let out = run(d, &["--config", "blobs.toml", "--out", "never2", "eval", "--checkpoint", "m/model.json"], &[]);
    assert_single_line_error(&out, "validation");
    assert!(!d.join("never2").exists());
}

#[test]
fn seed_flag_overrides_config() {
    let dir = setup(REGRESSION);
    let d = dir.path();
    ok(d, &["--config", "run.toml", "--out", "s5", "gen"]);
    ok(d, &["--config", "run.toml", "--out", "s6", "--seed", "6", "gen"]);
    ok(d, &["--config", "run.toml", "--out", "s5b", "--seed", "5", "gen"]);
    let (a, b) = (json(&d.join("s5/dataset.json")), json(&d.join("s6/dataset.json")));
    assert_ne!(a["config_digest"], b["config_digest"]);
    assert_ne!(a["dataset"], b["dataset"]);
    assert_eq!(payloads(&d.join("s5")), payloads(&d.join("s5b")));
}

#[test]
fn generated_csv_feeds_the_csv_source() {
    let dir = setup(REGRESSION);
    let d = dir.path();
    ok(d, &["--config", "run.toml", "--out", "gen", "gen"]);
    let csv_config = r#"
seed = 1

[data]
source = { kind = "csv", path = "gen/train.csv", schema = { features = ["x0"], targets = { values = ["y0"] } } }
split = [0.5, 0.25, 0.25]

[network]
hidden = [4]

[train]
epochs = 1
"#;
    fs::write(d.join("csv.toml"), csv_config).unwrap();
    ok(d, &["--config", "csv.toml", "--out", "from_csv", "gen"]);
    let doc = json(&d.join("from_csv/dataset.json"));
    assert_eq!(doc["dataset"]["inputs"]["rows"], 180);
    assert_eq!(doc["split_sizes"], serde_json::json!([90, 45, 45]));
    ok(d, &["--config", "csv.toml", "--out", "csv_model", "train"]);
}
