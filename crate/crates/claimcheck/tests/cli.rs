use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn claimcheck(args: &[&str], cwd: &Path) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_claimcheck")).args(args).current_dir(cwd).output().unwrap();
    assert!(out.status.success(), "claimcheck {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn synth_ingest_simulate_report() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    let said = claimcheck(&["synth", "--profile", "small", "--seed", "4", "--out", "corpus"], cwd);
    assert!(said.contains("200 claims"), "{said}");

    let ingest = claimcheck(&["ingest", "--corpus", "corpus"], cwd);
    assert!(ingest.contains("200 claims"), "{ingest}");
    assert!(ingest.contains("formula"), "{ingest}");

    let args = ["--set", "batch.b_u=40", "--set", "batch.b_l=40", "simulate", "--mode", "sequential", "--corpus", "corpus", "--series", "series"];
    let summary = claimcheck(&[&args[..], &["--out", "a.json"]].concat(), cwd);
    claimcheck(&[&args[..], &["--out", "b.json"]].concat(), cwd);
    assert!(summary.contains("manual") && summary.contains("sequential"), "{summary}");

    let strip = |name: &str| -> Value {
        let mut v: Value = serde_json::from_str(&std::fs::read_to_string(cwd.join(name)).unwrap()).unwrap();
        for r in v["reports"].as_array_mut().unwrap() {
            r["computation_seconds"] = Value::Null;
        }
        v
    };
    let a = strip("a.json");
    assert_eq!(a, strip("b.json"), "same seed, same report");
    let reports = a["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 2);
    assert!(reports[1]["total_cost"].as_f64().unwrap() < reports[0]["total_cost"].as_f64().unwrap());

    let claims_csv = std::fs::read_to_string(cwd.join("series/sequential_claims.csv")).unwrap();
    assert_eq!(claims_csv.lines().count(), 201);
    assert!(cwd.join("series/sequential_accuracy.csv").is_file());

    let again = claimcheck(&["report", "--input", "a.json"], cwd);
    assert_eq!(again.lines().count(), summary.lines().count());
}

#[test]
fn bad_override_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_claimcheck")).args(["--set", "batch.b_x=3", "report"]).current_dir(dir.path()).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("batch.b_x"));
}
