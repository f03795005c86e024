//! Black-box tests of the `xbarmap` binary.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_xbarmap"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

#[test]
fn map_produces_a_solution_with_error_fields() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sol.json");
    let status = bin()
        .args(["map", "--matrix"])
        .arg(fixture("example_8x8.csv"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let payload = &v["payload"];
    assert_eq!(payload["method"], "proposed");
    for key in ["total", "value_range", "precision"] {
        assert!(payload["error"][key].is_number(), "missing error.{key}");
    }
    assert!(payload["alpha"].as_f64().unwrap() > 0.0);
    assert_eq!(payload["g"].as_array().unwrap().len(), 64);
}

#[test]
fn mapped_solution_simulates_against_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let sol = dir.path().join("sol.json");
    assert!(bin()
        .args(["map", "--matrix"])
        .arg(fixture("example_8x8.csv"))
        .arg("--out")
        .arg(&sol)
        .status()
        .unwrap()
        .success());
    let inputs = dir.path().join("inputs.csv");
    std::fs::write(&inputs, "0.1,0.05,0.2,0.0,0.15,0.08,0.12,0.03\n").unwrap();
    let out = dir.path().join("out.json");
    assert!(bin()
        .args(["simulate", "--solution"])
        .arg(&sol)
        .arg("--inputs")
        .arg(&inputs)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["payload"]["inputs"], 1);
    assert_eq!(v["payload"]["realized_products"][0].as_array().unwrap().len(), 8);
}

#[test]
fn compare_runs_are_byte_identical_under_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &Path| {
        let mut cmd = bin();
        cmd.args([
            "compare",
            "--rows",
            "6",
            "--cols",
            "6",
            "--instances",
            "2",
            "--inputs",
            "10",
            "--seed",
            "7",
            "--out",
        ])
        .arg(out);
        cmd
    };
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    assert!(args(&a).status().unwrap().success());
    assert!(args(&b).status().unwrap().success());
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb, "reports differ byte-for-byte");
}

#[test]
fn sweep_tsv_is_monotone_and_self_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let tsv = dir.path().join("sweep.tsv");
    let out = dir.path().join("sweep.json");
    assert!(bin()
        .args(["analyze", "sweep", "--matrix"])
        .arg(fixture("example_8x8.csv"))
        .args(["--points", "5", "--tsv"])
        .arg(&tsv)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let text = std::fs::read_to_string(&tsv).unwrap();
    let mut prev_alpha = 0.0f64;
    for line in text.lines().skip(1) {
        let fields: Vec<f64> = line.split('\t').map(|f| f.parse().unwrap()).collect();
        let (alpha, total, vr, prec) = (fields[0], fields[1], fields[2], fields[3]);
        assert!(alpha > prev_alpha, "alpha column not increasing");
        prev_alpha = alpha;
        assert!(
            (total - (vr + prec)).abs() <= 1e-9 * total.max(1e-30),
            "decomposition identity broken: {total} vs {vr} + {prec}"
        );
    }
}

#[test]
fn analyze_range_reports_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"schema_version": 1, "crossbar": {"rows": 4, "cols": 4}}"#,
    )
    .unwrap();
    let out = dir.path().join("range.json");
    assert!(bin()
        .args(["analyze", "range", "--alpha", "1e-3", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let lo = v["payload"]["lo"].as_array().unwrap();
    let hi = v["payload"]["hi"].as_array().unwrap();
    assert_eq!(lo.len(), 16);
    for (l, h) in lo.iter().zip(hi.iter()) {
        assert!(l.as_f64().unwrap() <= h.as_f64().unwrap());
    }
}

#[test]
fn failures_exit_nonzero_with_structured_diagnostics() {
    let output = bin()
        .args(["map", "--matrix", "/nonexistent/matrix.csv"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    let v: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert!(v["error"]["message"].as_str().unwrap().contains("matrix"));
}

#[test]
fn malformed_matrix_reports_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1,2\n3,oops\n").unwrap();
    let output = bin().args(["map", "--matrix"]).arg(&bad).output().unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 2"), "diagnostic was: {stderr}");
}
