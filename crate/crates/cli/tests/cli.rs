use std::path::Path;
use std::process::{Command, Output};

fn expval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_expval")).args(args).env_remove("EXPVAL_WORKERS").output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn unknown_experiment_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", r#"{"schema_version": 1, "experiment": "nope"}"#);
    let out = expval(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
}

#[test]
fn missing_config_and_empty_seeds_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = expval(&["run", "--config", dir.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let cfg = write(dir.path(), "s.json", r#"{"schema_version": 1, "experiment": "oa_curve", "seeds": []}"#);
    let out = expval(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seeds"));
}

#[test]
fn bad_worker_count_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"schema_version": 1, "experiment": "channel_ptm"}"#);
    let out = Command::new(env!("CARGO_BIN_EXE_expval"))
        .args(["run", "--config", &cfg, "--out", dir.path().to_str().unwrap()])
        .env("EXPVAL_WORKERS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn deuteron_summary_is_json() {
    let out = expval(&["deuteron", "--summary"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["e_gs"].as_f64().unwrap() + 2.1174).abs() < 1e-3);
    assert_eq!(v["norm_traceless_one"].as_f64(), Some(117.5));
}

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"schema_version": 1, "experiment": "noise_budget"}"#);
    let out_dir = dir.path().join("out");
    let out = expval(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = std::fs::read_to_string(out_dir.join("noise_budget.csv")).unwrap();
    assert!(csv.starts_with("p,mode,n_per_setting,n_c,n_tot,calibration_fraction,ratio_to_noiseless\n"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("noise_budget_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["pass"], true);
    assert_eq!(summary["checks"][0]["landmark"].as_f64(), Some(100.0));
}

#[test]
fn observable_file_resolves_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "obs.json",
        r#"{"identity_coeff": 87.5, "terms": [{"weight": 35.0, "phase": 3.141592653589793, "string": "X"}, {"weight": 82.5, "phase": 0.0, "string": "Z"}]}"#,
    );
    let cfg = write(dir.path(), "c.json", r#"{"schema_version": 1, "experiment": "channel_ptm", "observable": "obs.json"}"#);
    let out = expval(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn failing_landmark_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"schema_version": 1, "experiment": "sqpe_cubic", "seeds": [0], "bias_modes": ["a1"], "shot_cap": 20000}"#,
    );
    let out = expval(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL cubic_shots_to_one_percent"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"schema_version": 1, "experiment": "sqpe_linear", "seeds": [3, 4]}"#);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let out = expval(&["run", "--config", &cfg, "--seed-override", "11", "--out", d.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
    }
    for f in ["sqpe_linear.csv", "sqpe_linear_summary.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let summary = std::fs::read_to_string(a.join("sqpe_linear_summary.json")).unwrap();
    assert!(summary.contains("\"seeds\": [\n    11\n  ]"));
}
