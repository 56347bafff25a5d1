use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_settle-sense"));
    c.env_remove("SETTLE_SENSE_THREADS");
    c
}

fn run(args: &[&str], scenario: &Path, out: &Path) -> Output {
    bin().args(&args[..1])
        .arg("--scenario")
        .arg(scenario)
        .arg("--out")
        .arg(out)
        .args(&args[1..])
        .output()
        .unwrap()
}

fn error_json(o: &Output) -> serde_json::Value {
    let line = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(line.lines().last().unwrap()).unwrap()
}

#[test]
fn settlement_grid_writes_csv_manifest_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.toml");
    std::fs::write(&scenario, "[settlement_grid]\nnx = 5\nny = 3\n").unwrap();
    let out = dir.path().join("out");
    let o = run(&["settlement-grid"], &scenario, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = std::fs::read_to_string(out.join("settlement_grid.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "x,y,settlement_mm");
    assert_eq!(lines.len(), 1 + 15);
    assert!(lines[1].starts_with("-30,-30,"));
    for l in &lines[1..] {
        let v: f64 = l.rsplit(',').next().unwrap().parse().unwrap();
        assert!(v <= 0.0);
    }

    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "settlement-grid");
    assert_eq!(manifest["seed"], 20240501);
    assert_eq!(manifest["outputs"][0]["rows"], 15);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);

    let config = std::fs::read_to_string(out.join("effective_config.toml")).unwrap();
    assert!(config.contains("nx = 5"));
    let again = settle_sense::scenario::Scenario::from_toml_str(&config).unwrap();
    assert_eq!(again.settlement_grid.n_points(), 15);
}

#[test]
fn seed_flag_overrides_scenario_seed() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.toml");
    std::fs::write(&scenario, "seed = 1\n[subset]\nn_per_level = 1000\n").unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&["reliability"], &scenario, &a).status.success());
    assert!(run(&["reliability", "--seed", "2"], &scenario, &b).status.success());
    let ra = std::fs::read_to_string(a.join("reliability.csv")).unwrap();
    let rb = std::fs::read_to_string(b.join("reliability.csv")).unwrap();
    assert_ne!(ra, rb);
    assert!(std::fs::read_to_string(b.join("effective_config.toml")).unwrap().starts_with("seed = 2"));
    let levels = std::fs::read_to_string(a.join("levels.csv")).unwrap();
    assert!(levels.starts_with("level,threshold,probability,gamma,n_samples\n"));
}

#[test]
fn missing_scenario_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["soi"], &dir.path().join("absent.toml"), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_json(&o)["category"], "io");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.toml");
    std::fs::write(&scenario, "[tunnel]\ndiamter = 10\n").unwrap();
    let o = run(&["update"], &scenario, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let e = error_json(&o);
    assert_eq!(e["category"], "config");
    assert!(e["message"].as_str().unwrap().contains("diamter"));
}

#[test]
fn invalid_geometry_is_reported_by_category() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.toml");
    std::fs::write(&scenario, "[tunnel]\naxis_depth = -4.0\n").unwrap();
    let o = run(&["settlement-grid"], &scenario, &dir.path().join("out"));
    assert_ne!(o.status.code(), Some(0));
    let e = error_json(&o);
    assert_eq!(e["exit_code"].as_i64().map(|c| c as i32), o.status.code());
}

#[test]
fn zero_threads_rejected_from_flag_and_environment() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.toml");
    std::fs::write(&scenario, "").unwrap();
    let o = run(&["settlement-grid", "--threads", "0"], &scenario, &dir.path().join("a"));
    assert_eq!(o.status.code(), Some(2));
    let o = bin()
        .env("SETTLE_SENSE_THREADS", "0")
        .args(["settlement-grid", "--scenario"])
        .arg(&scenario)
        .arg("--out")
        .arg(dir.path().join("b"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn environment_thread_count_gives_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.toml");
    std::fs::write(&scenario, "[subset]\nn_per_level = 1000\n").unwrap();
    let a = dir.path().join("a");
    assert!(run(&["reliability", "--threads", "1"], &scenario, &a).status.success());
    let b = dir.path().join("b");
    let o = bin()
        .env("SETTLE_SENSE_THREADS", "4")
        .args(["reliability", "--scenario"])
        .arg(&scenario)
        .arg("--out")
        .arg(&b)
        .output()
        .unwrap();
    assert!(o.status.success());
    for f in ["reliability.csv", "levels.csv", "manifest.json", "effective_config.toml"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn unknown_command_fails_with_usage() {
    let o = bin().arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
