use std::path::Path;
use std::process::{Command, Output};

const SHORT: &str = r#"{"priority": {"horizon": 20.0, "synth_horizon": 20.0}}"#;

fn taskprio(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taskprio"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn short_config(dir: &Path) -> String {
    let p = dir.join("short.json");
    std::fs::write(&p, SHORT).unwrap();
    p.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn demo_creates_nested_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let o = taskprio(&["--config", &cfg, "demo", "--out", "a/b"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("a/b/demos.csv")).unwrap();
    assert!(csv.starts_with("demo,t,q_0,"), "{}", &csv[..40]);
}

#[test]
fn bad_preset_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, r#"{"priority": {"robot": "r2d2"}}"#).unwrap();
    let o = taskprio(&["--config", p.to_str().unwrap(), "demo"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("priority.robot"), "{}", stderr(&o));
    assert!(!dir.path().join("out/demos.csv").exists());
}

#[test]
fn unknown_config_field_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("typo.json");
    std::fs::write(&p, r#"{"spaces": {"n_demo": 3}}"#).unwrap();
    let o = taskprio(&["--config", p.to_str().unwrap(), "demo", "--kind", "spaces"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n_demo"), "{}", stderr(&o));
}

#[test]
fn missing_demo_file_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = taskprio(&["train", "--demos", "nowhere.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn training_is_reproducible_and_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let run = |out: &str| {
        let o = taskprio(&["--config", &cfg, "--seed", "7", "demo", "--out", out], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
        let o = taskprio(&["--config", &cfg, "--seed", "7", "train", "--out", out], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(dir.path().join(out).join("model.json")).unwrap()
    };
    assert_eq!(run("r1"), run("r2"));

    let log = std::fs::read_to_string(dir.path().join("r1/training_log.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some("iteration,objective,log_likelihood"));
    let objective: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(!objective.is_empty());
    for w in objective.windows(2) {
        assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn synth_reuses_a_trained_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    for step in ["demo", "train"] {
        assert!(taskprio(&["--config", &cfg, step], dir.path()).status.success(), "{step}");
    }
    let o = taskprio(&["--config", &cfg, "synth", "--model", "out/model.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["synth_conflict.csv", "synth_conflict.svg", "synth_feasible.csv", "synth_feasible.svg"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
}

#[test]
fn transition_experiment_verdict_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str, jobs: &str| {
        let o = taskprio(&["--jobs", jobs, "exp", "transitions", "--out", out], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
        let stdout = String::from_utf8_lossy(&o.stdout).into_owned();
        assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 3, "{stdout}");
        std::fs::read(dir.path().join(out).join("verdict.json")).unwrap()
    };
    let a = run("v1", "1");
    assert_eq!(a, run("v2", "2"));

    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["experiment"], "transitions");
    assert_eq!(v["passed"], true);
    let criteria = v["suites"][0]["criteria"].as_array().unwrap();
    assert_eq!(criteria.len(), 3);
    assert!(criteria.iter().all(|c| c["passed"] == true && c["value"].is_number()));

    let table = |out: &str| std::fs::read(dir.path().join(out).join("transitions_weights.csv")).unwrap();
    assert_eq!(table("v1"), table("v2"));
}
