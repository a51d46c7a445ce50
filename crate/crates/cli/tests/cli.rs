//! End-to-end tests of the `defcast` binary and its exit code contract.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const EXE: &str = env!("CARGO_BIN_EXE_defcast");

fn scenario(n: u64) -> String {
    format!(
        r#"{{
  "game": "randomized", "M": 2, "N": {n}, "eps": 0.1, "eps_c": 0.01,
  "eps_n_schedule": {{"kind": "geometric", "a": 0.05, "r": 0.5, "floor": 1e-4}},
  "sceptic": "bins:8:0.25", "reality": "iid:0.7,0.3", "rng": "rng:faithful:42",
  "seed": 11
}}"#
    )
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn defcast(args: &[&str]) -> Output {
    Command::new(EXE).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn run(dir: &TempDir, n: u64, out: &str) -> (Output, PathBuf) {
    let cfg = write(dir, &format!("cfg{n}.json"), &scenario(n));
    let out = dir.path().join(out);
    let o = defcast(&["run", "--config", path(&cfg), "--out", path(&out)]);
    (o, out)
}

#[test]
fn zero_horizon_run_writes_header_only() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run(&dir, 0, "t.jsonl");
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read_to_string(out).unwrap().lines().count(), 1);
}

#[test]
fn binning_run_succeeds_and_verifies() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run(&dir, 200, "t.jsonl");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("sup K") && stdout.contains("invariant_held true"), "{stdout}");
    let v = defcast(&["verify", path(&out)]);
    assert_eq!(v.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&v.stdout).contains("capital_recursion  200/200 passed"));
}

#[test]
fn malformed_config_exits_2_with_line() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "bad.json", "{\n  \"game\": \"randomized\",\n  \"M\": ,\n}");
    let o = defcast(&["run", "--config", path(&cfg), "--out", path(&dir.path().join("t"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn invalid_parameter_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "bad.json", &scenario(5).replace("\"eps\": 0.1", "\"eps\": -1"));
    let o = defcast(&["run", "--config", path(&cfg), "--out", path(&dir.path().join("t"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(defcast(&[]).status.code(), Some(2));
    assert_eq!(defcast(&["run"]).status.code(), Some(2));
    assert_eq!(defcast(&["verify", "/nonexistent/t.jsonl"]).status.code(), Some(2));
}

#[test]
fn tampered_transcript_exits_1_naming_check_and_round() {
    let dir = TempDir::new().unwrap();
    let (_, out) = run(&dir, 20, "t.jsonl");
    let text = fs::read_to_string(&out).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut round: serde_json::Value = serde_json::from_str(&lines[5]).unwrap();
    let k = round["K"].as_f64().unwrap();
    round["K"] = serde_json::json!(k + 0.001);
    lines[5] = round.to_string();
    let tampered = write(&dir, "tampered.jsonl", &(lines.join("\n") + "\n"));
    let o = defcast(&["verify", path(&tampered)]);
    assert_eq!(o.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("capital_recursion (first at round 5)"), "{stderr}");
}

#[test]
fn truncated_transcript_exits_2() {
    let dir = TempDir::new().unwrap();
    let (_, out) = run(&dir, 5, "t.jsonl");
    let text = fs::read_to_string(&out).unwrap();
    let cut = write(&dir, "cut.jsonl", &text[..text.len() - 30]);
    let o = defcast(&["verify", path(&cut)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 6"));
}

#[test]
fn same_config_gives_identical_bytes() {
    let dir = TempDir::new().unwrap();
    let (_, a) = run(&dir, 50, "a.jsonl");
    let (_, b) = run(&dir, 50, "b.jsonl");
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn seed_override_changes_the_run() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", &scenario(30).replace("rng:faithful:42", "rng:faithful"));
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    defcast(&["run", "--config", path(&cfg), "--out", path(&a)]);
    defcast(&["run", "--config", path(&cfg), "--out", path(&b), "--seed-override", "12"]);
    assert_ne!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

fn sweep_config(grid: &str) -> String {
    scenario(20).replace("\"seed\": 11", &format!("\"seed\": 11, \"grid\": {grid}"))
}

#[test]
fn sweep_counts_outputs_and_dedups() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "grid.json",
        &sweep_config(r#"{"eps": [0.05, 0.1, 0.5, 0.1], "seed": [1, 2, 3, 4, 5]}"#),
    );
    let out = dir.path().join("sweep");
    let o = defcast(&["sweep", "--config", path(&cfg), "--out", path(&out), "--jobs", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("duplicate eps value 0.1"));
    let transcripts = fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "jsonl"))
        .count();
    assert_eq!(transcripts, 15);
    let mut rdr = csv::Reader::from_path(out.join("summary.csv")).unwrap();
    assert_eq!(
        rdr.headers().unwrap(),
        vec!["eps", "seed", "N", "supK", "finalF", "held"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 15);
    assert!(rows.iter().all(|r| &r[5] == "true"));
}

#[test]
fn one_cell_sweep_matches_run() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "grid.json", &sweep_config(r#"{"eps": [0.1], "seed": [11]}"#));
    let out = dir.path().join("sweep");
    assert_eq!(
        defcast(&["sweep", "--config", path(&cfg), "--out", path(&out)]).status.code(),
        Some(0)
    );
    let (_, single) = run(&dir, 20, "single.jsonl");
    let swept = out.join("run_eps0.1_seed11_N20.jsonl");
    assert_eq!(fs::read(swept).unwrap(), fs::read(single).unwrap());
}

#[test]
fn export_writes_capital_curves() {
    let dir = TempDir::new().unwrap();
    let (_, empty) = run(&dir, 0, "empty.jsonl");
    let csv_path = dir.path().join("empty.csv");
    assert_eq!(
        defcast(&["export", path(&empty), "--out", path(&csv_path)]).status.code(),
        Some(0)
    );
    assert_eq!(fs::read_to_string(&csv_path).unwrap(), "n,K,F,(1+eps)F\n");

    let (_, full) = run(&dir, 100, "full.jsonl");
    let csv_path = dir.path().join("full.csv");
    assert_eq!(
        defcast(&["export", path(&full), "--out", path(&csv_path)]).status.code(),
        Some(0)
    );
    let stored: Vec<serde_json::Value> = fs::read_to_string(&full)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let rows: Vec<csv::StringRecord> = csv::Reader::from_path(&csv_path)
        .unwrap()
        .records()
        .map(Result::unwrap)
        .collect();
    assert_eq!(rows.len(), 100);
    for (row, rec) in rows.iter().zip(&stored) {
        let k: f64 = row[1].parse().unwrap();
        let f: f64 = row[2].parse().unwrap();
        let bound: f64 = row[3].parse().unwrap();
        assert!(k <= bound + 1e-9);
        assert_eq!(k.to_bits(), rec["K"].as_f64().unwrap().to_bits());
        assert_eq!(f.to_bits(), rec["F"].as_f64().unwrap().to_bits());
    }
}

#[test]
fn export_of_garbage_exits_2() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.jsonl", "not json\n");
    let o = defcast(&["export", path(&bad), "--out", path(&dir.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(2));
}
