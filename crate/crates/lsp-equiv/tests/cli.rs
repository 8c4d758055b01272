use lsp_equiv::harness::cli::run;
use std::process::Command;

fn call(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("lsp-equiv").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(call(&["bogus"]).0, 2);
    assert_eq!(call(&["verify", "--nope"]).0, 2);
    assert_eq!(call(&["verify", "--n", "abc"]).0, 2);
    assert_eq!(call(&["conditions", "--format", "xml"]).0, 2);
}

#[test]
fn help_exits_0() {
    let (code, out, _) = call(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("verify") && out.contains("export-basis"));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = dir.path().join("unknown.json");
    std::fs::write(&unknown, r#"{"n_grid": [64], "colour": "red"}"#).unwrap();
    let (code, _, err) = call(&["conditions", "--config", unknown.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("colour"), "{err}");

    let descending = dir.path().join("descending.json");
    std::fs::write(&descending, r#"{"n_grid": [128, 64]}"#).unwrap();
    assert_eq!(call(&["conditions", "--config", descending.to_str().unwrap()]).0, 2);

    let missing = dir.path().join("missing.json");
    assert_eq!(call(&["conditions", "--config", missing.to_str().unwrap()]).0, 2);
}

#[test]
fn conditions_csv_has_one_row_per_condition() {
    let (code, out, _) = call(&["conditions", "--n", "1024", "--format", "csv"]);
    assert_eq!(code, 0);
    let mut rdr = csv::Reader::from_reader(out.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(headers.iter().collect::<Vec<_>>(), ["n", "K", "id", "condition", "value", "budget", "flagged"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 8);
    // Q + K + 1 ≤ R² slack: 4 + 6 + 1 = 11 against 100
    let piecing = rows.iter().find(|r| &r[2] == "clt.piecing_slack").unwrap();
    assert!((piecing[4].parse::<f64>().unwrap() - 0.11).abs() < 1e-12);
}

#[test]
fn piecing_violation_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tight.json");
    std::fs::write(&cfg, r#"{"n_grid": [256], "q": 8, "r": 2.0}"#).unwrap();
    assert_eq!(call(&["conditions", "--config", cfg.to_str().unwrap()]).0, 1);
}

#[test]
fn out_dir_receives_one_file_per_n() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    let (code, stdout, _) = call(&["export-basis", "--out", out.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(code, 0);
    assert!(stdout.is_empty());
    for n in [64, 128, 256] {
        let body = std::fs::read_to_string(out.join(format!("basis_n{n}.csv"))).unwrap();
        // K = 6 rows plus the header
        assert_eq!(body.lines().count(), 7);
    }
}

#[test]
fn verify_json_is_schema_tagged_and_passes() {
    let (code, out, err) = call(&["verify", "--n", "32"]);
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["schema"], lsp_equiv::report::SCHEMA);
    let entries = v["entries"].as_array().unwrap();
    assert!(!entries.is_empty());
    assert!(entries.iter().all(|e| e["pass"] == serde_json::Value::Bool(true)));
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_lsp-equiv");
    let ok = Command::new(bin).args(["conditions", "--n", "256"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let bad = Command::new(bin).arg("bogus").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(!bad.stderr.is_empty());
}
