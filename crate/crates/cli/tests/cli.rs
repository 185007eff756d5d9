use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epb-abs")).args(args).arg("--out").arg(out).output().expect("binary runs")
}

const HEADER: &str =
    "t,v_x,x,omega_rl,omega_rr,slip_r,slip_target,mu_true,mu_hat,t_cmd,t_act,t_hat,clamp_force,current,omega_m,duty,s_r,s_t,flags";

#[test]
fn simulate_writes_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["simulate", "--controller", "pid"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trace.csv", "metrics.txt", "metrics.json", "scenario.toml"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some(HEADER));
    let text = fs::read_to_string(dir.path().join("metrics.txt")).unwrap();
    assert!(text.lines().any(|l| l == "controller = pid"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert!(json["stopping_distance_m"].as_f64().unwrap() > 0.0);
    let echo = fs::read_to_string(dir.path().join("scenario.toml")).unwrap();
    assert!(echo.contains("controller = \"pid\""));
}

#[test]
fn echoed_scenario_reproduces_the_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run(&["simulate", "--set", "v0_mps=12"], a.path()).status.code(), Some(0));
    let echo = a.path().join("scenario.toml");
    let out = run(&["simulate", "--scenario", echo.to_str().unwrap()], b.path());
    assert_eq!(out.status.code(), Some(0));
    let read = |d: &Path| fs::read(d.join("trace.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["simulate", "--set", "no_such_key=1"][..],
        &["simulate", "--set", "dt_plant_s=-1"],
        &["simulate", "--set", "v0_speed=3"],
        &["simulate", "--scenario", "/nonexistent/scenario.toml"],
    ] {
        let out = run(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn numerical_abort_exits_3_and_keeps_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["simulate", "--set", "dt_plant_s=0.01", "--set", "t_ctrl_s=0.01"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("numerical abort"));
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.lines().count() > 1);
    assert!(!dir.path().join("metrics.txt").exists());
}

#[test]
fn compare_writes_both_runs_and_deltas() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["compare", "--set", "v0_mps=10"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    for f in ["smc/trace.csv", "pid/trace.csv", "deltas.txt", "deltas.json", "trace_deltas.csv"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let deltas = fs::read_to_string(dir.path().join("deltas.txt")).unwrap();
    let get = |k: &str| -> f64 {
        let line = deltas.lines().find(|l| l.starts_with(&format!("{k} = "))).unwrap();
        line.split(" = ").nth(1).unwrap().parse().unwrap()
    };
    let d = get("stopping_distance_m.pid") - get("stopping_distance_m.smc");
    assert!((get("stopping_distance_m.delta") - d).abs() < 1e-9);
}

#[test]
fn sweep_summarises_each_value_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["sweep", "--param", "v0_mps", "--values", "8,10", "--jobs", "2"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let table = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("8,ok,") && rows[2].starts_with("10,ok,"));
    assert!(dir.path().join("v0_mps=10/trace.csv").is_file());
}

#[test]
fn suite_reports_every_criterion_independent_of_jobs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run(&["paper-suite", "--jobs", "1"], a.path()).status.code(), Some(0));
    assert_eq!(run(&["paper-suite", "--jobs", "4"], b.path()).status.code(), Some(0));
    let report = fs::read_to_string(a.path().join("report.md")).unwrap();
    for id in 1..=10 {
        assert!(report.contains(&format!("\n| {id} | ")), "criterion {id} missing");
    }
    for name in ["single_mu_0.8", "high_to_low", "low_to_high", "estimator_schedule", "high_to_low_pid"] {
        let ta = fs::read(a.path().join(name).join("trace.csv")).unwrap();
        let tb = fs::read(b.path().join(name).join("trace.csv")).unwrap();
        assert_eq!(ta, tb, "{name} differs between job counts");
    }
}
