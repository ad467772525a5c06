use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use zonekit_core::report::{CompareTable, Report};
use zonekit_core::wire::WireEnvelope;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_zonekit"))
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).to_owned()
}

fn demo() -> PathBuf {
    root().join("scenarios/demo.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn report(engine: &str) -> Report {
    let o = run(&["run", demo().to_str().unwrap(), "--engine", engine, "--format", "json", "--no-timing"]);
    WireEnvelope::parse(&stdout(&o)).unwrap().decode().unwrap()
}

#[test]
fn demo_mock_report_matches_golden() {
    let o = run(&["run", demo().to_str().unwrap(), "--format", "json", "--no-timing"]);
    let got = stdout(&o);
    let golden = root().join("tests/golden/demo_mock_report.json");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&golden, &got).unwrap();
    }
    assert_eq!(got, std::fs::read_to_string(golden).unwrap());
    let again = stdout(&run(&["run", demo().to_str().unwrap(), "--format", "json", "--no-timing"]));
    assert_eq!(got, again);
}

#[test]
fn demo_shape_and_acceptance() {
    let r = report("mock");
    assert_eq!(r.assignment.len(), 8);
    assert_eq!(r.acceptance.accepted, 8);
    assert!(!r.fallback.any());
    assert!(r.wall_time_ms.is_none());
}

#[test]
fn oracle_not_worse_than_greedy_on_demo() {
    let g = report("greedy");
    let o = report("oracle");
    assert!(o.total_cost <= g.total_cost, "{} > {}", o.total_cost, g.total_cost);
}

#[test]
fn missing_file_exits_2() {
    let o = run(&["run", "/nonexistent/scenario.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_engine_exits_2() {
    let o = run(&["run", demo().to_str().unwrap(), "--engine", "quantum"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn llm_without_provider_exits_2() {
    let o = bin().args(["run", demo().to_str().unwrap(), "--engine", "llm"]).env_remove("ZONEKIT_PROVIDER_ENDPOINT").output().unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn timing_is_reported_by_default() {
    let o = run(&["run", demo().to_str().unwrap(), "--format", "json"]);
    let r: Report = WireEnvelope::parse(&stdout(&o)).unwrap().decode().unwrap();
    assert!(r.wall_time_ms.is_some());
}

#[test]
fn out_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    stdout(&run(&["run", demo().to_str().unwrap(), "--format", "csv", "--out", out.to_str().unwrap()]));
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.starts_with("app,zone,cell,cost\n"));
    assert_eq!(text.lines().count(), 9);
}

#[test]
fn config_override_from_toml() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[sizing]\nmax_scale = 5.0\n").unwrap();
    let o = run(&["run", demo().to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--format", "json", "--no-timing"]);
    let r: Report = WireEnvelope::parse(&stdout(&o)).unwrap().decode().unwrap();
    assert!(r.zones.iter().all(|z| z.scale_factor <= 5.0));
    std::fs::write(&cfg, "[sizing]\nbogus = 1\n").unwrap();
    let o = run(&["run", demo().to_str().unwrap(), "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

fn compare(seed: &str, trials: &str) -> CompareTable {
    let o = run(&["compare", demo().to_str().unwrap(), "--engines", "greedy,oracle,mock", "--trials", trials, "--seed", seed, "--format", "json", "--no-timing"]);
    WireEnvelope::parse(&stdout(&o)).unwrap().decode().unwrap()
}

#[test]
fn compare_regret_nonnegative_and_deterministic() {
    let a = compare("11", "12");
    assert_eq!(a.rows.len(), 3);
    for r in &a.rows {
        assert!(r.mean_regret >= 0.0 && r.max_regret >= 0.0, "{r:?}");
    }
    assert_eq!(a.rows[1].mean_regret, 0.0);
    assert_eq!(a, compare("11", "12"));
}

#[test]
fn compare_zero_trials_is_empty() {
    let t = compare("1", "0");
    assert!(t.rows.is_empty());
    assert_eq!(t.trials, 0);
}
