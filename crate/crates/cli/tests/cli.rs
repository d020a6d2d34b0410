//! Drives the `dama` binary end to end on a small config.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "environment": {"kind": "sequential_sales", "n": 3, "m": 2},
  "distribution": {"kind": "uniform_symmetric", "lo": 0.0, "hi": 1.0},
  "loss": "revenue",
  "method": "zeroth",
  "optimizer": {"bootstrap_points": 16, "bootstrap_profiles": 20, "num_iterations": 4,
                "num_starts": 2, "selection_profiles": 50, "zo_perturbations": 4, "batch_profiles": 5},
  "eval_profiles": 200,
  "seed": 3
}"#;

fn dama(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dama")).args(args).output().unwrap()
}

fn text(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn run_then_compare_against_vcg() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    let zeroth = write_config(dir.path(), "zeroth.json", SMALL);
    let vcg = write_config(dir.path(), "vcg.json", &SMALL.replace("\"zeroth\"", "\"vcg\""));

    for cfg in [&zeroth, &vcg] {
        let o = dama(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "2"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(text(&o).contains("wrote"));
    }
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let records = [
        out.join("sequential_sales_n3_m2_vcg_seed3.json"),
        out.join("sequential_sales_n3_m2_zeroth_seed3.json"),
    ];
    let o = dama(&["compare", records[0].to_str().unwrap(), records[1].to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = text(&o);
    assert!(table.contains("vcg") && table.contains("zeroth") && table.contains('*'), "{table}");
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "vcg.json", &SMALL.replace("\"zeroth\"", "\"vcg\""));
    let o = dama(&["run", cfg.to_str().unwrap(), "--seed", "11", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert!(dir.path().join("sequential_sales_n3_m2_vcg_seed11.json").exists());
}

#[test]
fn audit_reports_a_clean_vcg_mechanism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "vcg.json", &SMALL.replace("\"zeroth\"", "\"vcg\""));
    let o = dama(&["audit", cfg.to_str().unwrap(), "--profiles", "5", "--threads", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["ic_passed"], true);
    assert_eq!(summary["ir_passed"], true);
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", &SMALL.replace("\"seed\"", "\"sead\""));
    let o = dama(&["run", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("sead"));

    let o = dama(&["compare", dir.path().join("missing.json").to_str().unwrap()]);
    assert!(!o.status.success());
    let o = dama(&["run", cfg.to_str().unwrap(), "--threads", "0"]);
    assert!(!o.status.success());
}
