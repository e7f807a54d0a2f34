use std::path::Path;
use std::process::{Command, Output};

use hetnet_core::model::ScenarioConfig;

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetnet-sim")).args(args).output().unwrap()
}

fn run_custom(dir: &Path, name: &str, workers: &str) -> Vec<u8> {
    let out = dir.join(name);
    let o = sim(&[
        "run",
        "--experiment",
        "fig3",
        "--schemes",
        "dual,ep",
        "--drops",
        "3",
        "--seed",
        "9",
        "--workers",
        workers,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::read(out).unwrap()
}

#[test]
fn output_is_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_custom(dir.path(), "a.csv", "1");
    let b = run_custom(dir.path(), "b.csv", "3");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("scheme,sweep,drop,objective"));
    assert_eq!(text.lines().count(), 2 + 5 * 3 * 2);
    assert!(dir.path().join("a.summary.csv").exists());
}

#[test]
fn config_file_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let shown = sim(&["show-config"]);
    assert!(shown.status.success());
    let mut scenario = ScenarioConfig::from_toml_str(std::str::from_utf8(&shown.stdout).unwrap()).unwrap();
    scenario.subcarriers_per_band = 2;
    scenario.r_min = 0.0;
    let cfg = dir.path().join("scenario.toml");
    std::fs::write(&cfg, scenario.to_toml_string()).unwrap();
    let out = dir.path().join("c.csv");
    let o = sim(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--drops",
        "2",
        "--trace",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("c.trace.csv").exists());
}

#[test]
fn bad_arguments_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let out = out.to_str().unwrap();
    assert!(!sim(&["run", "--workers", "0", "--out", out]).status.success());
    assert!(!sim(&["run", "--schemes", "magic", "--out", out]).status.success());
    assert!(!sim(&["run", "--drops", "0", "--out", out]).status.success());
}
