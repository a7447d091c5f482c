use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lte-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn simulate_into(dir: &Path) -> Output {
    sim(&[
        "simulate",
        "--preset",
        "diffuse_bgt",
        "--horizon",
        "400",
        "--replications",
        "3",
        "--out-dir",
        dir.to_str().unwrap(),
    ])
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(simulate_into(a.path()).status.success());
    assert!(simulate_into(b.path()).status.success());
    for name in [
        "summary.json",
        "rounds_r000.csv",
        "rounds_r001.csv",
        "rounds_r002.csv",
    ] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn bad_config_exits_two_with_failure_list() {
    let dir = tempfile::tempdir().unwrap();
    let out = sim(&[
        "simulate",
        "--preset",
        "baseline",
        "--mode",
        "bgt",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(!v["failures"].as_array().unwrap().is_empty());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);

    let out = sim(&[
        "simulate",
        "--preset",
        "baseline",
        "--set",
        "nope=1",
        "--out-dir",
        "/tmp",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = sim(&[
        "sweep",
        "--preset",
        "baseline",
        "--replications",
        "2",
        "--horizons",
        "100,200,400",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("horizon,regret_mean"));
}
