use std::fs;

use rbm_coupling::harness::{run_experiment, ExperimentConfig, HarnessError, RunOptions};

fn theorem3_config(dir: &std::path::Path) -> ExperimentConfig {
    let json = format!(
        r#"{{
            "experiment": "theorem3",
            "domain": {{"kind": "wedge", "alpha": 0.7853981633974483}},
            "dt": 2e-5, "horizon": 1.0, "trials": 40, "seed": 5,
            "startSpec": {{"kind": "sweep", "hinge": 1.0, "beta": 0.98, "along": [0.0], "height": [0.03]}},
            "outputDir": {:?}
        }}"#,
        dir.to_str().unwrap()
    );
    ExperimentConfig::from_json(&json).unwrap()
}

#[test]
fn theorem3_run_writes_outputs_and_finds_events() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = theorem3_config(tmp.path());
    let s = run_experiment(&cfg, &RunOptions::default()).unwrap();
    assert!(s.successes >= 1);
    assert!(s.wilson_low95 <= s.estimate && s.estimate <= s.wilson_high95);
    for f in ["summary.json", "trials.csv", "timing.json"] {
        assert!(tmp.path().join(f).is_file(), "{f}");
    }
    let csv = fs::read_to_string(tmp.path().join("trials.csv")).unwrap();
    assert_eq!(csv.lines().count(), 41);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert!(summary.get("wallClockSeconds").is_none());
    assert_eq!(summary["configEcho"]["seed"], 5);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut ca = theorem3_config(a.path());
    ca.trials = 12;
    let mut cb = ca.clone();
    cb.output_dir = Some(b.path().to_path_buf());
    run_experiment(&ca, &RunOptions { workers: Some(1), dump_paths: false }).unwrap();
    run_experiment(&cb, &RunOptions { workers: Some(3), dump_paths: false }).unwrap();
    for f in ["trials.csv", "summary.json"] {
        let ra = fs::read_to_string(a.path().join(f)).unwrap();
        let rb = fs::read_to_string(b.path().join(f)).unwrap().replace(b.path().to_str().unwrap(), a.path().to_str().unwrap());
        assert_eq!(ra, rb, "{f}");
    }
}

#[test]
fn zero_trials_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = theorem3_config(tmp.path());
    cfg.trials = 0;
    let err = run_experiment(&cfg, &RunOptions::default()).unwrap_err();
    assert!(matches!(err, HarnessError::InvalidConfig { field: "trials", .. }), "{err}");
}

#[test]
fn dumped_paths_are_capped() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_json(&format!(
        r#"{{
            "experiment": "syncFlow",
            "domain": {{"kind": "disk", "center": [0, 0], "radius": 1}},
            "dt": 0.01, "horizon": 1, "trials": 20, "seed": 1,
            "startSpec": {{"kind": "points", "points": [[0, 0], [0.01, 0]]}},
            "outputDir": {:?}
        }}"#,
        tmp.path().to_str().unwrap()
    ))
    .unwrap();
    run_experiment(&cfg, &RunOptions { workers: None, dump_paths: true }).unwrap();
    let n = fs::read_dir(tmp.path().join("paths")).unwrap().count();
    assert!(n > 0 && n <= 16 * 2, "{n}");
}
