//! End-to-end runs of the `ctok` binary: exit codes, manifests, artifacts.

use std::path::Path;
use std::process::{Command, Output};

fn ctok(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctok"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_tiny_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("tiny.toml");
    std::fs::write(
        &path,
        r#"
seed = 7

[train]
epochs = 6
lr = 0.003
batch = 4
log_every = 3

[tokenizer]
n_tokens = 4
d_basis = 8
d_model = 16
n_layers = 1
n_heads = 4
mlp_hidden = 16
d_global = 6

[encoder]
d_model = 16
d_global = 6
l_fuzzy = 4
l_aug = 12
"#,
    )
    .unwrap();
    path
}

#[test]
fn dry_run_prints_config_without_side_effects() {
    let dir = tempfile::tempdir().unwrap();
    let out = ctok(dir.path(), &["gen-pool", "--dry-run", "--domains", "nature", "--matrices", "3"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("\"matrices\": 3"));
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none(), "no files written");
}

#[test]
fn gen_pool_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let out = ctok(
        dir.path(),
        &["gen-pool", "--domains", "nature", "--matrices", "5", "--seed", "9", "--out", "a.jsonl"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("nature: 20 pairs (20 valid, 15 train, 5 test)"), "{stdout}");
    assert!(dir.path().join("a.manifest.json").exists(), "run manifest written");

    let out2 = ctok(
        dir.path(),
        &["gen-pool", "--domains", "nature", "--matrices", "5", "--seed", "9", "--out", "b.jsonl"],
    );
    assert!(out2.status.success());
    let a = std::fs::read(dir.path().join("a.jsonl")).unwrap();
    let b = std::fs::read(dir.path().join("b.jsonl")).unwrap();
    assert_eq!(a, b, "identical flags give byte-identical pools");
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = ctok(dir.path(), &["gen-pool", "--matrices", "0"]);
    assert_eq!(out.status.code(), Some(1));
    let out = ctok(dir.path(), &["gen-pool", "--domains", "castles"]);
    assert_eq!(out.status.code(), Some(1));
    let out = ctok(dir.path(), &["gen-pool", "--backend", "remote", "--matrices", "1"]);
    assert_eq!(out.status.code(), Some(1), "remote without endpoint");
    let out = ctok(dir.path(), &["definitely-not-a-command"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_files_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = ctok(dir.path(), &["train", "--pool", "nope.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    let out = ctok(dir.path(), &["eval", "--checkpoint", "nope.ckpt", "--pool", "nope.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_eval_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let cfg = config.to_str().unwrap();

    let out = ctok(
        dir.path(),
        &["gen-pool", "--domains", "nature", "--matrices", "4", "--out", "pool.jsonl"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = ctok(
        dir.path(),
        &["--config", cfg, "train", "--pool", "pool.jsonl", "--out", "run"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for artifact in ["checkpoint.ckpt", "metrics.jsonl", "metrics.csv", "run_manifest.json"] {
        assert!(dir.path().join("run").join(artifact).exists(), "{artifact}");
    }

    let out = ctok(
        dir.path(),
        &["eval", "--checkpoint", "run/checkpoint.ckpt", "--pool", "pool.jsonl", "--out", "m.json"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
    assert!(metrics["holdout_edge_cosine"].is_number());

    // Export one pair that exists in the pool's domain.
    let pool_text = std::fs::read_to_string(dir.path().join("pool.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(pool_text.lines().next().unwrap()).unwrap();
    let pair = format!("{},{}", first["concept"].as_str().unwrap(), first["style"].as_str().unwrap());
    let out = ctok(
        dir.path(),
        &["export", "--checkpoint", "run/checkpoint.ckpt", "--pair", &pair, "--out", "t.tensors"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let container = ctok_core::container::TensorContainer::read(&dir.path().join("t.tensors")).unwrap();
    let tokens = container.tensor("tokens").unwrap();
    assert_eq!(tokens.dim(), (4, 16));
    assert_eq!(container.tensor("global").unwrap().dim(), (1, 6));

    // A pair outside every vocabulary is a data error.
    let out = ctok(
        dir.path(),
        &["export", "--checkpoint", "run/checkpoint.ckpt", "--pair", "Spaceship,Cloud"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn init_only_checkpoint_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let cfg = config.to_str().unwrap();
    let out = ctok(
        dir.path(),
        &["gen-pool", "--domains", "nature", "--matrices", "4", "--out", "pool.jsonl"],
    );
    assert!(out.status.success());
    let out = ctok(
        dir.path(),
        &["--config", cfg, "train", "--pool", "pool.jsonl", "--out", "init", "--init-only"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = ctok(
        dir.path(),
        &["eval", "--checkpoint", "init/checkpoint.ckpt", "--pool", "pool.jsonl", "--out", "e.json"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let row: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("e.json")).unwrap()).unwrap();
    assert_eq!(row["epoch"], 0);
}

#[test]
fn gradcheck_passes_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = ctok(dir.path(), &["gradcheck", "--out", "gc.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    for term in ["l_sim", "l_reg", "l_disen", "l_anch", "l_global_mse", "l_total"] {
        assert!(stdout.contains(term), "{stdout}");
    }
    assert!(stdout.contains("PASS"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("gc.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
}
