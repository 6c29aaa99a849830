use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn riskfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskfl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"{
    "trust_window": 3,
    "area_side_m": 2000,
    "n_clients": 8,
    "n_rb": 8,
    "rounds": 6,
    "synthetic_samples": 400,
    "synthetic_features": 5,
    "synthetic_classes": 4,
    "validation_size": 100,
    "seed": 1
}"#;

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn print_defaults_is_a_valid_config() {
    let o = riskfl(&["print-defaults"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["trust_window"], 5);
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "d.json", &text);
    let out = dir.path().join("v.csv");
    // the printed defaults load back without complaint
    let o = riskfl(&[
        "validate-channel",
        "--config",
        &cfg,
        "--samples",
        "2000",
        "--zetas",
        "1",
        "--distances",
        "50",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn run_writes_csv_and_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let out = dir.path().join("out");
    let o = riskfl(&[
        "run",
        "--case",
        "A",
        "--config",
        &cfg,
        "--seed",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("case_A.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "t,zeta_db,mode,n_participants,n_success,loss,accuracy"
    );
    assert_eq!(csv.lines().count(), 7);
    let jsonl = fs::read_to_string(out.join("case_A.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 7);
    assert!(jsonl.lines().next().unwrap().contains("\"seed\":4"));
}

#[test]
fn compare_cases_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let threaded = write_config(
        dir.path(),
        "t.json",
        &SMALL.replace("\"seed\": 1", "\"seed\": 1, \"threads\": 3"),
    );
    let mut outputs = Vec::new();
    for (i, c) in [&cfg, &cfg, &threaded].iter().enumerate() {
        let out = dir.path().join(format!("o{i}"));
        let o = riskfl(&[
            "compare-cases",
            "--config",
            c,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push(fs::read(out.join("compare.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert!(text.starts_with("case,t,zeta_db,mode,n_participants,n_success,loss,accuracy\n"));
    assert_eq!(text.lines().count(), 1 + 3 * 6);
}

#[test]
fn unknown_key_is_reported_with_suggestion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"trust_window": 5, "lamda": 50}"#);
    let o = riskfl(&["run", "--case", "B", "--config", &cfg]);
    assert!(!o.status.success());
    let e = stderr(&o);
    assert!(e.contains("lamda") && e.contains("lambda_per_km2"), "{e}");
}

#[test]
fn missing_trust_window_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", "{}");
    let o = riskfl(&["compare-cases", "--config", &cfg]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("trust_window"));
}

#[test]
fn bad_case_is_a_usage_error() {
    let o = riskfl(&["run", "--case", "D", "--config", "x.json"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("expected A, B or C"));
}

#[test]
fn validate_channel_passes_and_fault_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid.csv");
    let args = |fault: &'static str| {
        vec![
            "validate-channel",
            "--samples",
            "20000",
            "--zetas",
            "0,1,10",
            "--distances",
            "50,200",
            "--out",
            out.to_str().unwrap().to_string().leak(),
            "--fault-scale",
            fault,
        ]
    };
    let ok = riskfl(&args("1.0"));
    assert!(ok.status.success(), "{}", stderr(&ok));
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "zeta_db,r,S_analytic,S_montecarlo,abs_err"
    );
    assert_eq!(csv.lines().count(), 7);
    let bad = riskfl(&args("1.1"));
    assert!(!bad.status.success());
    assert!(stderr(&bad).contains("FAILED"));
}

#[test]
fn fault_flag_is_hidden() {
    let o = riskfl(&["validate-channel", "--help"]);
    let help = String::from_utf8(o.stdout).unwrap();
    assert!(help.contains("--samples"));
    assert!(!help.contains("--fault-scale"));
}
