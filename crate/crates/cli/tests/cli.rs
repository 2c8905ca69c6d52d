use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"{"dims": {"n1": 2, "n2": 2, "m": 1}, "grids": {"p": [2, 4]},
  "mc": {"samples": 3200, "batches": 16}, "restarts": 2}"#;

fn chaos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chaos")).args(args).env_remove("THREADS").output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn verify_is_the_default_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let out = chaos(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("ensemble,n1,n2,m,q,r,p,seed,mc_lhs"));
    assert!(lines.iter().all(|l| l.split(',').count() == 22));

    let explicit = chaos(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(explicit.stdout, text.as_bytes());
}

#[test]
fn same_seed_gives_identical_bytes_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = cfg.to_str().unwrap();
    assert_eq!(chaos(&["--config", c, "--seed", "9", "--threads", "1", "--out", a.to_str().unwrap()]).status.code(), Some(0));
    let out = Command::new(env!("CARGO_BIN_EXE_chaos"))
        .args(["--config", c, "--seed", "9", "--out", b.to_str().unwrap()])
        .env("THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let other = chaos(&["--config", c, "--seed", "10"]);
    assert_ne!(other.stdout, fs::read(&a).unwrap());
}

#[test]
fn report_reserializes_json_as_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let c = cfg.to_str().unwrap();
    let json = dir.path().join("rows.json");
    assert_eq!(chaos(&["--config", c, "--format", "json", "--out", json.to_str().unwrap()]).status.code(), Some(0));
    let parsed: serde_json::Value = serde_json::from_slice(&fs::read(&json).unwrap()).unwrap();
    assert_eq!(parsed.as_array().unwrap().len(), 2);
    let direct = chaos(&["--config", c]);
    let via = chaos(&["report", json.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(via.status.code(), Some(0));
    assert_eq!(via.stdout, direct.stdout);
}

#[test]
fn bound_and_simulate_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let c = cfg.to_str().unwrap();
    let bound = String::from_utf8(chaos(&["bound", "--config", c]).stdout).unwrap();
    let row: Vec<&str> = bound.lines().nth(1).unwrap().split(',').collect();
    assert!(row[8].is_empty() && !row[10].is_empty());
    let sim = chaos(&["simulate", "--config", c]);
    assert_eq!(sim.status.code(), Some(0));
    let sim = String::from_utf8(sim.stdout).unwrap();
    let row: Vec<&str> = sim.lines().nth(1).unwrap().split(',').collect();
    assert!(!row[8].is_empty() && row[10].is_empty());
}

#[test]
fn scalar_config_reproduces_the_term_values() {
    let out = chaos(&["bound", "--config", configs_dir().join("scalar.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').skip(10).take(6).map(|s| s.parse().unwrap()).collect();
    for (got, want) in row.iter().zip([1.0, 4.0, 4.0, 4.0, 4.0, 16.0]) {
        assert!((got - want).abs() < 1e-8, "{row:?}");
    }
}

#[test]
fn gk_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "g.json",
        r#"{"gk": {"n": 3, "vectors": 2}, "grids": {"p": [2]}, "mc": {"samples": 3200, "batches": 16}}"#,
    );
    let out = chaos(&["gk", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("index,n,family,r,p,seed,mc,mc_stderr,norm_xp,ratio,flags"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let zero = write_config(
        dir.path(),
        "z.json",
        r#"{"ensemble": {"kind": "zero"}, "dims": {"n1": 1, "n2": 1, "m": 1}, "grids": {"p": [2]},
            "mc": {"samples": 320, "batches": 8}}"#,
    );
    assert_eq!(chaos(&["--config", zero.to_str().unwrap()]).status.code(), Some(1));

    let bad = write_config(dir.path(), "b.json", r#"{"dist": {"r": 0.5}}"#);
    let out = chaos(&["--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("r >= 1"));

    let unknown = write_config(dir.path(), "u.json", r#"{"grid": {}}"#);
    assert_eq!(chaos(&["--config", unknown.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(chaos(&["--format", "xml"]).status.code(), Some(2));

    let missing = dir.path().join("nope.json");
    assert_eq!(chaos(&["--config", missing.to_str().unwrap()]).status.code(), Some(3));
    let small = write_config(dir.path(), "c.json", SMALL);
    let unwritable = dir.path().join("no/such/dir/out.csv");
    let out = chaos(&["--config", small.to_str().unwrap(), "--out", unwritable.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}
