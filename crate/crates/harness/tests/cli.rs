use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pib_harness::runs::RunSummary;

const SMALL: &str = r#"{
  "dataset": {"source": "blobs", "train_size": 120, "test_size": 60, "blob_dim": 6, "blob_classes": 3},
  "network": {"hidden": [8]},
  "track": {"lr": 0.1, "batch_size": 16, "iterations": 60, "fim_gradients": 16, "log_interval": 10},
  "sgld": {"batch_size": 16, "iterations": 60, "burn_in": 20, "sample_stride": 10, "fim_gradients": 8, "log_interval": 10},
  "sweep": {"batch_sizes": [8, 32]},
  "compare": {"methods": ["vanilla", "pib"]},
  "seeds": [0, 1]
}"#;

fn pib(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pib"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), config).unwrap();
    dir
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn identical_runs_give_identical_bytes() {
    let dir = setup(SMALL);
    for cmd in ["track", "pib-train", "compare"] {
        for out in ["a", "b"] {
            let o = pib(&["--config", "c.json", "--out", out, cmd], dir.path());
            assert!(
                o.status.success(),
                "{cmd}: {}",
                String::from_utf8_lossy(&o.stderr)
            );
        }
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        let listed = files(&a);
        assert_eq!(listed, files(&b));
        let mut compared = 0;
        for f in listed.iter().filter(|f| !f.ends_with("timing.txt")) {
            let same = fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap();
            assert!(same, "{cmd}: {} differs", f.display());
            compared += 1;
        }
        assert!(compared >= 5, "{cmd}");
        fs::remove_dir_all(&a).unwrap();
        fs::remove_dir_all(&b).unwrap();
    }
}

#[test]
fn zero_iterations_write_a_header_only_csv() {
    let dir = setup(&SMALL.replace(
        "\"iterations\": 60, \"fim_gradients\": 16",
        "\"iterations\": 0, \"fim_gradients\": 16",
    ));
    let o = pib(
        &["--config", "c.json", "--out", "z0", "--seed", "3", "track"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("z0/track/seed_3/metrics.csv")).unwrap();
    assert_eq!(csv, "iter,train_loss,train_acc,test_acc,iiw,lr\n");
}

#[test]
fn unknown_keys_and_bad_ranges_exit_with_two() {
    for bad in [
        r#"{"trak": {}}"#,
        r#"{"track": {"learnrate": 0.1}}"#,
        r#"{"track": {"rho": 2.0}}"#,
        r#"{"compare": {"methods": ["vanilla", "mixup"]}}"#,
        r#"{"seeds": []}"#,
        "not json",
    ] {
        let dir = setup(bad);
        let o = pib(&["--config", "c.json", "--out", "o", "track"], dir.path());
        assert_eq!(o.status.code(), Some(2), "{bad}");
        assert!(
            String::from_utf8_lossy(&o.stderr).contains("invalid configuration"),
            "{bad}"
        );
    }
    let dir = setup(SMALL);
    let o = pib(&["--config", "missing.json", "track"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = pib(&["--config", "c.json", "sweep"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_needs_two_methods() {
    let dir = setup(&SMALL.replace(r#"["vanilla", "pib"]"#, r#"["pib"]"#));
    let o = pib(&["--config", "c.json", "--out", "o", "compare"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn divergence_exits_with_three_and_keeps_partial_artifacts() {
    let dir = setup(&SMALL.replace("\"lr\": 0.1", "\"lr\": 1e308"));
    let o = pib(
        &["--config", "c.json", "--out", "o", "--seed", "0", "track"],
        dir.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let run = dir.path().join("o/track/seed_0");
    let csv = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("iter,train_loss"));
    let summary: RunSummary =
        serde_json::from_str(&fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    assert!(summary.divergence.is_some());
    assert!(dir.path().join("o/aggregate.json").exists());
}

#[test]
fn summary_gap_matches_the_csv() {
    let dir = setup(SMALL);
    let o = pib(&["--config", "c.json", "--out", "o", "track"], dir.path());
    assert!(o.status.success());
    for seed in [0, 1] {
        let run = dir.path().join(format!("o/track/seed_{seed}"));
        let csv = fs::read_to_string(run.join("metrics.csv")).unwrap();
        let last: Vec<f64> = csv
            .lines()
            .last()
            .unwrap()
            .split(',')
            .map(|c| c.parse().unwrap_or(f64::NAN))
            .collect();
        let s: RunSummary =
            serde_json::from_str(&fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
        assert_eq!(s.gap, last[2] - last[3]);
        assert!((s.gap - (s.final_train_acc - s.final_test_acc)).abs() <= 1e-12);
        assert!(s.no_compression || s.peak_iiw.unwrap() >= s.final_iiw.unwrap());
    }
}

#[test]
fn sweep_cell_equals_the_single_run() {
    let dir = setup(SMALL);
    let o = pib(
        &[
            "--config", "c.json", "--out", "sw", "sweep", "--axis", "batch",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let single = SMALL.replace(
        "\"batch_size\": 16, \"iterations\": 60",
        "\"batch_size\": 32, \"iterations\": 60",
    );
    fs::write(dir.path().join("single.json"), single).unwrap();
    let o = pib(
        &["--config", "single.json", "--out", "one", "track"],
        dir.path(),
    );
    assert!(o.status.success());
    for seed in [0, 1] {
        let a = dir.path().join(format!("sw/batch_32/seed_{seed}"));
        let b = dir.path().join(format!("one/track/seed_{seed}"));
        for f in ["metrics.csv", "checkpoint.bin"] {
            assert_eq!(
                fs::read(a.join(f)).unwrap(),
                fs::read(b.join(f)).unwrap(),
                "{f}"
            );
        }
    }
}

#[test]
fn oracle_report_has_the_documented_fields() {
    let dir = setup(
        r#"{"oracle": {"gradient_nets": 1, "ridge_n": 500, "logistic_n": 60, "logistic_removals": 5,
                       "bootstrap_k": 20, "bootstrap_n": 100, "kl_samples": 1000,
                       "poisson_draws": 1000, "sgld_samples": 100, "sgld_stride": 10}}"#,
    );
    let o = pib(
        &["--config", "c.json", "--out", "o", "oracle-validate"],
        dir.path(),
    );
    assert!(matches!(o.status.code(), Some(0) | Some(1)));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/oracle_report.json")).unwrap())
            .unwrap();
    let rows = report.as_array().unwrap();
    assert!(rows.len() >= 14);
    for r in rows {
        let keys: Vec<&str> = r.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        assert_eq!(
            keys,
            ["metric", "pass", "pipeline_stage", "threshold", "value"]
        );
    }
}

#[test]
fn checkpoint_layout() {
    let dir = setup(SMALL);
    assert!(pib(
        &["--config", "c.json", "--out", "o", "--seed", "0", "track"],
        dir.path()
    )
    .status
    .success());
    let bytes = fs::read(dir.path().join("o/track/seed_0/checkpoint.bin")).unwrap();
    let d = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    // 6 inputs, 8 hidden, 3 classes.
    assert_eq!(d, 6 * 8 + 8 + 8 * 3 + 3);
    assert_eq!(bytes.len(), 8 + 8 * d + 8);
    let iter = u64::from_le_bytes(bytes[8 + 8 * d..].try_into().unwrap());
    assert_eq!(iter, 60);
}
