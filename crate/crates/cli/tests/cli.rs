use std::fs;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbm-coupling")).args(args).output().unwrap()
}

fn stdout_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn invalid_config_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"experiment": "syncFlow", "dt": 0.01, "horizon": 1, "trials": 0, "seed": 1}"#).unwrap();
    let o = bin(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(bin(&["simulate-sync", "--dt", "-1"]).status.code(), Some(2));
    assert_eq!(bin(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn run_writes_result_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sync.json");
    fs::write(
        &cfg,
        r#"{
            "experiment": "syncFlow",
            "domain": {"kind": "disk", "center": [0, 0], "radius": 1},
            "dt": 0.01, "horizon": 2, "trials": 5, "seed": 4,
            "startSpec": {"kind": "grid", "center": [0, 0], "radius": 0.05, "perSide": 2}
        }"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = bin(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout_json(&o);
    assert_eq!(s["experiment"], "syncFlow");
    assert_eq!(s["trials"], 5);
    for f in ["summary.json", "trials.csv", "timing.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn subcommands_with_flags_only() {
    let o = bin(&["detect-cones", "--trials", "3", "--dt", "0.001", "--horizon", "0.5", "--half-angle", "0.3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["experiment"], "coneCensus");
    let o = bin(&["simulate-mirror", "--domain", "halfplane", "--x0", "0.2,0.3", "--y0", "-0.2,0.3", "--trials", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["experiment"], "mirrorHalfplane");
}

#[test]
fn strip_check_reports_json_keys() {
    let o = bin(&["strip-check", "--frames", "20", "--points", "20", "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["frames_tested"], 20);
    assert!(v["max_symmetry_residual"].as_f64().unwrap() < 1e-9);
    assert!(v["derivative_max_relerr"].as_f64().unwrap() < 1e-5);
    assert_eq!(v["negativity_violations"], 0);
}

#[test]
fn strip_check_on_a_dumped_wedge_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("mirror");
    let o = bin(&[
        "simulate-mirror", "--domain", "wedge", "--trials", "2", "--dt", "2e-5", "--horizon", "0.2", "--dump-paths", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let path = fs::read_dir(out.join("paths")).unwrap().next().unwrap().unwrap().path();
    let o = bin(&[
        "strip-check", "--frames", "5", "--points", "5", "--trajectory", path.to_str().unwrap(), "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(tmp.path().join("strip_steps.csv")).unwrap();
    assert!(csv.starts_with("t,zRe,zIm,rhoTilde,residual,skipped"));
    assert!(csv.lines().count() > 100);
}
