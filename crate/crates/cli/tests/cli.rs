//! End-to-end tests of the `saddle-lab` binary: config parsing, output
//! files, reproducibility, and exit codes.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_saddle-lab");

fn scratch(case: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("saddle-lab-cli-{}-{case}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_config(dir: &PathBuf, config: &str, envs: &[(&str, &str)]) -> Output {
    let path = dir.join("exp.conf");
    fs::write(&path, config).unwrap();
    let mut cmd = Command::new(BIN);
    cmd.arg("run").arg(&path).arg("--out").arg(dir.join("out"));
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

#[test]
fn phase_expectation_labels_and_series_shape() {
    let dir = scratch("phase");
    let out = run_config(
        &dir,
        "experiment = phase-expectation\ntrials = 10\n",
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let trials = fs::read_to_string(dir.join("out/trials.csv")).unwrap();
    let rows: Vec<&str> = trials.lines().collect();
    assert_eq!(rows[0], "trial,seed,label,iterations,final_error");
    assert_eq!(rows.len(), 11);
    for row in &rows[1..] {
        assert_eq!(row.split(',').nth(2), Some("minimum"), "{row}");
    }

    // One row per grid point (max_iters / record_every + 1), iter monotone.
    let series = fs::read_to_string(dir.join("out/series.csv")).unwrap();
    let srows: Vec<&str> = series.lines().collect();
    assert_eq!(srows[0], "iter,mean_log10_err,min,max");
    assert_eq!(srows.len(), 1 + 500 / 10 + 1);
    let iters: Vec<usize> = srows[1..]
        .iter()
        .map(|r| r.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(iters.windows(2).all(|w| w[0] < w[1]));

    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/result.json")).unwrap()).unwrap();
    assert_eq!(json["counts"]["minimum"], 10);
    assert_eq!(json["config"]["n"], 64);
}

#[test]
fn result_json_config_round_trips_byte_identical() {
    let dir = scratch("roundtrip");
    let out = run_config(&dir, "experiment = phase-expectation\ntrials = 5\n", &[]);
    assert!(out.status.success());
    let first = fs::read(dir.join("out/trials.csv")).unwrap();

    // Rebuild a config file from the JSON echo and rerun it.
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/result.json")).unwrap()).unwrap();
    let mut rebuilt = String::new();
    for (key, value) in json["config"].as_object().unwrap() {
        if key == "out_dir" {
            continue;
        }
        let value = match value {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        rebuilt.push_str(&format!("{key} = {value}\n"));
    }
    let dir2 = scratch("roundtrip2");
    let out2 = run_config(&dir2, &rebuilt, &[]);
    assert!(out2.status.success(), "{}", String::from_utf8_lossy(&out2.stderr));
    let second = fs::read(dir2.join("out/trials.csv")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn svc_counterexample_reports_the_stuck_fraction() {
    let dir = scratch("svc");
    let out = run_config(&dir, "experiment = svc-counterexample\ntrials = 20000\n", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/result.json")).unwrap()).unwrap();
    let in_v = json["in_v_fraction"].as_f64().unwrap();
    assert!((0.157..=0.177).contains(&in_v), "in_v_fraction = {in_v}");
}

#[test]
fn zero_trials_is_a_validation_error() {
    let dir = scratch("zerotrials");
    let out = run_config(&dir, "experiment = phase-expectation\ntrials = 0\n", &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("trials"));
}

#[test]
fn parse_failures_carry_line_numbers() {
    let dir = scratch("parse");
    let out = run_config(&dir, "experiment = phase-expectation\nstep_size = fast\n", &[]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "{stderr}");
}

#[test]
fn seed_env_var_overrides_the_config() {
    let dir = scratch("seed-a");
    let base = "experiment = phase-expectation\ntrials = 3\nseed = 1\n";
    assert!(run_config(&dir, base, &[]).status.success());
    let dir2 = scratch("seed-b");
    assert!(run_config(&dir2, base, &[("SADDLE_LAB_SEED", "2")]).status.success());
    let a = fs::read_to_string(dir.join("out/trials.csv")).unwrap();
    let b = fs::read_to_string(dir2.join("out/trials.csv")).unwrap();
    assert_ne!(a, b);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir2.join("out/result.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["seed"], 2);
}

#[test]
fn describe_known_unknown_and_missing() {
    let out = Command::new(BIN).args(["describe", "eig-stiefel"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("first-5"), "{text}");
    assert!(text.contains("Fig. 3"), "{text}");
    assert!(text.contains("trials.csv"), "{text}");

    let out = Command::new(BIN).args(["describe", "bogus"]).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    for name in [
        "phase-expectation",
        "phase-realization",
        "eig-sphere-linear",
        "eig-sphere-nonlinear",
        "eig-stiefel",
        "svc-counterexample",
        "saddle-probe",
        "retraction-order",
    ] {
        assert!(err.contains(name), "{err}");
    }

    let out = Command::new(BIN).arg("describe").output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn jobs_flag_does_not_change_results() {
    let dir = scratch("jobs-a");
    let config = "experiment = retraction-order\ntrials = 3\n";
    let path = dir.join("exp.conf");
    fs::write(&path, config).unwrap();
    let out = Command::new(BIN)
        .args(["run"])
        .arg(&path)
        .args(["--jobs", "1", "--out"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir2 = scratch("jobs-b");
    let out2 = run_config(&dir2, config, &[]);
    assert!(out2.status.success());
    assert_eq!(
        fs::read(dir.join("out/trials.csv")).unwrap(),
        fs::read(dir2.join("out/trials.csv")).unwrap()
    );
}
