use std::path::Path;
use std::process::{Command, Output};

fn posetraj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posetraj"))
        .args(args)
        .env_remove("POSETRAJ_SEED")
        .env_remove("POSETRAJ_PRESET")
        .env_remove("POSETRAJ_NO_TRANSFORM")
        .env_remove("POSETRAJ_ABLATION")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = posetraj(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TINY: &[&str] = &[
    "--layers", "1", "--heads", "2", "--ffn", "16", "--j-dim", "8", "--dropout", "0",
    "--input-len", "4", "--output-len", "3",
];

fn generate(dir: &Path, count: &str, seed: &str) {
    ok(&["generate", "--out", p(dir), "--count", count, "--duration", "1.0", "--seed", seed]);
}

fn train(data: &Path, out: &Path, extra: &[&str]) -> String {
    let mut args = vec!["train", "--data", p(data), "--out", p(out), "--epochs", "1", "--stride", "3", "--seed", "4"];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    ok(&args)
}

fn first_loss(out: &Path) -> f64 {
    let log = std::fs::read_to_string(out.join("train_log.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    first["train_loss"].as_f64().unwrap()
}

#[test]
fn missing_data_dir_is_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = posetraj(&["train", "--data", p(&dir.path().join("nope")), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no sequences found"));
}

#[test]
fn unknown_flag_fails_with_usage() {
    let out = posetraj(&["eval", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn pipeline_trains_evaluates_and_ablates() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let model = dir.path().join("model");
    generate(&data, "3", "1");
    train(&data, &model, &[]);
    for f in ["model.ckpt", "last.ckpt", "train_log.jsonl", "manifest.json"] {
        assert!(model.join(f).exists(), "{f} missing");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(model.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");

    let ckpt = model.join("model.ckpt");
    let report = dir.path().join("eval.json");
    ok(&["eval", "--checkpoint", p(&ckpt), "--data", p(&data), "--out", p(&report)]);
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let text = r.to_string();
    for key in ["ade_pose", "fde_pose", "ade_traj", "fde_traj"] {
        assert!(text.contains(key), "{key} missing from {text}");
    }

    let table = ok(&["ablate", "--checkpoint", p(&ckpt), "--data", p(&data), "--seed", "2"]);
    for row in ["original", "translate", "rotate", "translate+rotate"] {
        assert!(table.contains(row), "{row} missing from\n{table}");
    }

    let bench = ok(&["bench", "--checkpoint", p(&ckpt), "--repeats", "4"]);
    assert!(bench.contains("samples"), "{bench}");
}

#[test]
fn empty_eval_dir_is_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    generate(&data, "1", "1");
    let model = dir.path().join("model");
    train(&data, &model, &[]);
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = posetraj(&["eval", "--checkpoint", p(&model.join("model.ckpt")), "--data", p(&empty)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn same_seed_reproduces_epoch_one_loss() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    generate(&data, "2", "3");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    train(&data, &a, &[]);
    train(&data, &b, &["--threads", "1"]);
    assert_eq!(first_loss(&a).to_bits(), first_loss(&b).to_bits());
}
