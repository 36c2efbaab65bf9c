use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn roughkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roughkit"))
        .args(args)
        .env("ROUGHKIT_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL_PRICE: &str = r#"{"mc": {"n_paths": 200, "n_steps": 16, "level": 2, "n_starts": 1, "max_evals": 20}}"#;

#[test]
fn pvar_of_a_line() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "line.csv", "t,x1,x2\n0,0,0\n0.5,1.5,2\n1,3,4\n");
    let out = roughkit(&["pvar", "--input", &input, "--p", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["version"], "pvar-v1");
    assert!((doc["value"].as_f64().unwrap() - 5.0).abs() < 1e-12);
}

#[test]
fn signature_to_stdout_and_file() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "path.csv", "t,x1\n0,0\n1,2\n");
    let out = roughkit(&["sig", "--input", &input, "--level", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let res = dir.path().join("res");
    let out = roughkit(&["sig", "--input", &input, "--level", "2", "--out", res.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read_to_string(res.join("signature.json")).unwrap(), stdout);
}

#[test]
fn malformed_csv_names_the_line() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "bad.csv", "t,x1\n0,0\n0.5,zz\n");
    let out = roughkit(&["pvar", "--input", &input, "--p", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(roughkit(&[]).status.code(), Some(2));
    assert_eq!(roughkit(&["price", "--out", "x"]).status.code(), Some(2));
    assert_eq!(roughkit(&["frobnicate"]).status.code(), Some(2));
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "p.csv", "t,x1\n0,0\n1,1\n");
    assert_eq!(roughkit(&["pvar", "--input", &input, "--p", "0.5"]).status.code(), Some(2));
    let cfg = write(dir.path(), "c.json", r#"{"payoff": "straddle"}"#);
    let out = dir.path().join("o");
    assert_eq!(roughkit(&["price", "--config", &cfg, "--seed", "1", "--out", out.to_str().unwrap()]).status.code(), Some(2));
    let cfg = write(dir.path(), "d.json", r#"{"instance": "nope"}"#);
    assert_eq!(
        roughkit(&["control-lab", "--config", &cfg, "--seed", "1", "--out", out.to_str().unwrap()]).status.code(),
        Some(2)
    );
    assert_eq!(roughkit(&["--help"]).status.code(), Some(0));
}

#[test]
fn price_is_reproducible_per_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "price.json", SMALL_PRICE);
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let status = roughkit(&["price", "--config", &cfg, "--seed", seed, "--out", out.to_str().unwrap()]);
        assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
        (fs::read(out.join("price.json")).unwrap(), fs::read(out.join("price_trace.csv")).unwrap())
    };
    let a = run("7", "a");
    let b = run("7", "b");
    let c = run("8", "c");
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
    let doc: serde_json::Value = serde_json::from_slice(&a.0).unwrap();
    assert_eq!(doc["version"], "price-v1");
    assert_eq!(doc["config"]["strike"].as_f64(), Some(20.0));
    assert_eq!(doc["seed"].as_u64(), Some(7));
    assert!(String::from_utf8(a.1).unwrap().starts_with("# price-v1\n"));
}

#[test]
fn filter_writes_the_riccati_table() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "f.json", r#"{"n_steps": 256, "horizon": 1.0}"#);
    let out = dir.path().join("f");
    let status = roughkit(&["filter", "--config", &cfg, "--seed", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    let table = fs::read_to_string(out.join("filter.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("# filter-v1"));
    assert!(lines.next().unwrap().starts_with("t,"));
    assert_eq!(lines.count(), 257);
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("filter.json")).unwrap()).unwrap();
    assert_eq!(doc["version"], "filter-v1");
}

#[test]
fn control_lab_trading_table() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"instance": "trading", "log2_steps": 6}"#);
    let out = dir.path().join("c");
    let status = roughkit(&["control-lab", "--config", &cfg, "--seed", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    let table = fs::read_to_string(out.join("degeneracy.csv")).unwrap();
    assert!(table.starts_with("# control-v1\n"));
}
