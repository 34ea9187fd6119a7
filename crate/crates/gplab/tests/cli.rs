//! Black-box checks of the command-line binary: exit codes, config
//! precedence, and report emission.

use std::io::Write;
use std::process::Command;

fn gplab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gplab"))
}

#[test]
fn good_run_reports_on_stdout_and_times_on_stderr() {
    let out = gplab()
        .args(["run", "--seed", "5", "--replicas", "40", "--level", "-0.2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["config"]["seed"], 5);
    assert_eq!(report["config"]["replicas"], 40);
    assert_eq!(report["estimate"]["replicas"], 40);
    let p = report["estimate"]["p"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("replicas on"), "stderr was: {stderr}");
    assert!(!String::from_utf8(out.stdout.clone()).unwrap().contains("replicas on"));
}

#[test]
fn schedule_reports_the_derived_parameters() {
    let out = gplab()
        .args(["schedule", "--N", "16", "--eta", "0.5", "--beta", "3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["n"], 16.0);
    assert!(report["s"].as_f64().unwrap() > 0.0);
    assert!(report["epsilon_snapped"].as_f64().unwrap() > 0.0);
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    let mut f = std::fs::File::create(&path).unwrap();
    write!(f, r#"{{"seed": 7, "replicas": 30, "level": -0.5}}"#).unwrap();
    drop(f);
    let out = gplab()
        .args(["run", "--config", path.to_str().unwrap(), "--seed", "9"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["config"]["seed"], 9, "flag beats file");
    assert_eq!(report["config"]["replicas"], 30, "file beats default");
    assert_eq!(report["config"]["level"], -0.5);
}

#[test]
fn out_flag_writes_the_report_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = gplab()
        .args(["run", "--replicas", "25", "--out", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.ends_with('\n'));
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["estimate"]["replicas"], 25);
    assert!(out.stdout.is_empty(), "report goes to the file, not stdout");
}

#[test]
fn config_errors_exit_2() {
    // unknown key in the config file
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"sede": 7}"#).unwrap();
    let out = gplab().args(["run", "--config", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    // malformed event string
    let out = gplab().args(["run", "--event", "full:4,1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // delta outside [0, 1]
    let out = gplab().args(["run", "--delta", "1.5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn model_geometry_errors_exit_3() {
    // event radius far beyond the window
    let out = gplab()
        .args(["run", "--replicas", "10", "--event", "full:1,100"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(!out.stderr.is_empty());
}
