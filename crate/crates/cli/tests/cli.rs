use std::path::Path;
use std::process::{Command, Output};

fn opinion(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opinion")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn simulate_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = opinion(&["simulate", "--scenario", "catalog/fig1_left", "--seed", "7", "--out", "a"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("a/fig1_left/trajectories.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("mechanism,replication,t,k,p"));
    // 20 replications x (full + meanfield + mkv) x 101 times
    assert_eq!(csv.lines().count(), 1 + 20 * 3 * 101);

    let again = opinion(&["simulate", "--scenario", "catalog/fig1_left", "--seed", "7", "--out", "b"], dir.path());
    assert!(again.status.success());
    let csv2 = std::fs::read(dir.path().join("b/fig1_left/trajectories.csv")).unwrap();
    assert_eq!(csv.as_bytes(), &csv2[..]);
    let m1 = std::fs::read(dir.path().join("a/fig1_left/manifest.json")).unwrap();
    let m2 = std::fs::read(dir.path().join("b/fig1_left/manifest.json")).unwrap();
    assert_eq!(m1, m2);
    let manifest: serde_json::Value = serde_json::from_slice(&m1).unwrap();
    assert_eq!(manifest["master_seed"], 7);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn manifest_records_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--scenario", "catalog/snowball", "--set", "c=0.5", "--set", "N=200", "--out", "."];
    let o = opinion(&args, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("snowball/manifest.json")).unwrap();
    let manifest: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(manifest["overrides"], serde_json::json!(["c=0.5", "N=200"]));
    assert_eq!(manifest["n_agents"], 200);

    let plain = opinion(&["validate", "--scenario", "snowball"], dir.path());
    let changed = opinion(&["validate", "--scenario", "snowball", "--set", "c=0.5", "--set", "N=200"], dir.path());
    let hash = |o: &Output| stdout(o).split_whitespace().last().unwrap().to_string();
    assert_ne!(hash(&plain), hash(&changed));
    assert_eq!(hash(&changed), manifest["config_hash"].as_str().unwrap());
}

#[test]
fn analytics_values() {
    let here = Path::new(".");
    let f = json(&opinion(&["analytics", "fluctuation", "--c", "0.8", "--c0", "0.15", "--T", "20"], here));
    assert!((f["outputs"]["p_min_inf"].as_f64().unwrap() - 0.0085484).abs() < 1e-7);
    assert!((f["outputs"]["p_max_inf"].as_f64().unwrap() - 0.7414516).abs() < 1e-7);

    let c = json(&opinion(&["analytics", "cycle", "--c", "0.8", "--c0", "0.15"], here));
    assert!((c["outputs"]["v_star"].as_f64().unwrap() - 0.0833333).abs() < 1e-7);
    assert_eq!(c["outputs"]["argmax_T"], 1);

    let d = json(&opinion(&["analytics", "diffusion", "--alpha", "0.2", "--rho", "0.9", "--c", "0.5", "--theta", "0.2"], here));
    assert_eq!(d["outputs"]["decision"], "beta=1");
    assert!((d["outputs"]["threshold"].as_f64().unwrap() - 0.138675).abs() < 1e-6);

    let s = json(&opinion(&["analytics", "stationary", "--c", "0.5", "--c0", "0.5", "--alpha", "0.5", "--beta", "0.5"], here));
    assert!((s["outputs"]["variance"].as_f64().unwrap() - 1.0 / 12.0).abs() < 1e-15);
    let k = json(&opinion(&["analytics", "cumulants", "--c", "0.5", "--c0", "0.5"], here));
    assert!((k["outputs"]["cumulants"][1].as_f64().unwrap() - 1.0 / 12.0).abs() < 1e-15);
    let e = json(&opinion(&["analytics", "echo", "--epsilon", "0.05", "--nu", "0.3"], here));
    assert!((e["outputs"]["class1_variance_stated"].as_f64().unwrap() - 0.035625).abs() < 1e-15);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| opinion(args, dir.path()).status.code().unwrap();
    assert_eq!(code(&["list"]), 0);
    assert_eq!(code(&["simulate", "--scenario", "no_such_scenario"]), 2);
    assert_eq!(code(&["validate", "--scenario", "toy_half", "--set", "replications=0"]), 2);
    assert_eq!(code(&["simulate", "--scenario", "fig1_right_1m", "--out", "."]), 3);
    assert_eq!(code(&["analytics", "fluctuation", "--c", "1.5", "--c0", "0.1", "--T", "2"]), 4);
    assert_eq!(code(&["analytics", "diffusion", "--alpha", "0", "--rho", "0.5", "--c", "0.5", "--theta", "1"]), 4);

    std::fs::write(dir.path().join("bad.toml"), "name = \"x\"\nn_agents = \"many\"\n").unwrap();
    let o = opinion(&["validate", "--scenario", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_agents"));
}

#[test]
fn list_covers_catalog() {
    let o = opinion(&["list"], Path::new("."));
    let text = stdout(&o);
    for name in ["fig1_left", "fig2_right", "fig3", "fig4", "fig5_left", "fig6_right", "fig7_middle", "fig8_left", "toy_half", "echo_chamber", "fads"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
    assert!(text.lines().any(|l| l.starts_with("fig1_right_1m") && l.contains("--allow-large")));
}

#[test]
fn error_tables() {
    let here = Path::new(".");
    let o = opinion(&["errors", "--scenario", "catalog/toy_half", "--metric", "local", "--mechanism", "meanfield", "--T", "10", "--reps", "10"], here);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "metric,mechanism,N,M,T,estimate,std_error,bound,replications");
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1].split(',').nth(7), Some("0.005"));

    let o = opinion(&["errors", "--scenario", "toy_half", "--metric", "global", "--mechanism", "full", "--grid", "T=0,5,10", "--reps", "3", "--set", "N=500"], here);
    let text = stdout(&o);
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(5) == Some("0")));

    let o = opinion(&["errors", "--scenario", "toy_half", "--mechanism", "common:10", "--grid", "M=10,100,1000", "--T", "3", "--reps", "4"], here);
    let ms: Vec<usize> = stdout(&o).lines().skip(1).map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert_eq!(ms, vec![10, 100, 1000]);
}
