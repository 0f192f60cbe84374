use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"
horizon = 12
warmup_probes = 10
heuristic_samples = 300
refine_iters = 5
offline_epochs = 1
model_layers = 1
model_dim = 8
model_mlp = 16
corruption_rates = [0.0, 0.3]
ogd_sweep = [1, 5]
domain_sweep = [2, 3]
scalability_seeds = 1
"#;

fn casformer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_casformer"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn casformer")
}

fn repo_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml")
}

fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.toml");
    std::fs::write(&path, TINY).unwrap();
    path
}

/// steps.csv without the trailing latency column.
fn metric_columns(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect()
}

#[test]
fn validate_config_accepts_the_shipped_default() {
    let out = casformer(&["validate-config", "--config", repo_config().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let echoed = String::from_utf8(out.stdout).unwrap();
    assert!(echoed.contains("horizon = 200"));
    assert!(echoed.contains("heuristic_samples = 10000"));
}

#[test]
fn missing_config_names_the_path() {
    let out = casformer(&["longterm", "--config", "/nonexistent/run.toml"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/nonexistent/run.toml"), "{err}");
}

#[test]
fn bad_values_and_unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for (body, needle) in [("horizon = 0\n", "horizon"), ("no_such_key = 1\n", "no_such_key")] {
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, body).unwrap();
        let out = casformer(&["validate-config", "--config", path.to_str().unwrap()]);
        assert!(!out.status.success());
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(needle), "{err}");
    }
}

#[test]
fn unknown_subcommand_and_flag_fail() {
    assert!(!casformer(&["frobnicate"]).status.success());
    assert!(!casformer(&["longterm", "--no-such-flag"]).status.success());
    assert!(!casformer(&["longterm", "--format", "xml"]).status.success());
}

#[test]
fn longterm_writes_outputs_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let mut columns = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = casformer(&[
            "longterm",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "7",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        for file in ["steps.csv", "summary.csv", "report.json", "config.resolved"] {
            assert!(out_dir.join(file).exists(), "{file}");
        }
        columns.push(metric_columns(&out_dir.join("steps.csv")));
    }
    assert_eq!(columns[0][0], "seed,t,method,tau_e2e,tau_1,tau_2,tau_3,p_e2e");
    assert_eq!(columns[0].len(), 1 + 4 * 12);
    assert_eq!(columns[0], columns[1]);
}

#[test]
fn csv_format_skips_json() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = casformer(&[
        "overfit",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("summary.csv").exists());
    assert!(!out_dir.join("report.json").exists());
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert!(summary.contains("rade,ogd=5"), "{summary}");
}
