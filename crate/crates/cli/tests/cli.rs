use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn phalanx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phalanx")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = "n = 4\nbyzantine = 3:shuffle\ncommands_per_proposer = 30\nseed = 9\n";

#[test]
fn run_writes_result_and_traces() {
    let dir = TempDir::new().unwrap();
    let scenario = dir.path().join("s.txt");
    fs::write(&scenario, SMALL).unwrap();
    let out = dir.path().join("out");
    let o = phalanx(&["run", path(&scenario), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["reordered_ratio"], 0.0);
    assert_eq!(json["committed"], 30);
    for i in 0..4 {
        assert!(out.join(format!("trace-N{i}.txt")).exists());
    }
    let o = phalanx(&["diff-traces", path(&out.join("trace-N0.txt")), path(&out.join("trace-N1.txt"))]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn run_is_byte_stable_and_flags_override() {
    let dir = TempDir::new().unwrap();
    let scenario = dir.path().join("s.txt");
    fs::write(&scenario, SMALL).unwrap();
    let read = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["run", path(&scenario), "--out", path(&out)];
        args.extend_from_slice(extra);
        assert_eq!(phalanx(&args).status.code(), Some(0));
        fs::read_to_string(out.join("result.json")).unwrap()
    };
    assert_eq!(read("a", &[]), read("b", &[]));
    let ts = read("c", &["--strategy", "timestamp", "--seed", "4"]);
    assert!(ts.contains("\"strategy\": \"timestamp\"") && ts.contains("\"seed\": 4"));
}

#[test]
fn malformed_scenario_exits_2() {
    let dir = TempDir::new().unwrap();
    let scenario = dir.path().join("bad.txt");
    fs::write(&scenario, "n = four\n").unwrap();
    let o = phalanx(&["run", path(&scenario), "--out", path(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = phalanx(&["run", path(&dir.path().join("missing.txt"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn duration_guard_exits_4() {
    let dir = TempDir::new().unwrap();
    let scenario = dir.path().join("s.txt");
    fs::write(&scenario, "n = 4\ncommands_per_proposer = 100\nmax_duration = 40\n").unwrap();
    let o = phalanx(&["run", path(&scenario), "--out", path(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn sweep_csv_is_versioned_and_stable() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("sweep.txt");
    fs::write(
        &spec,
        "n = 4\ncommands_per_proposer = 20\nsweep = byzantine_count\nvalues = 0..1\nstrategies = anchor, timestamp\nreps = 3\n",
    )
    .unwrap();
    let csv = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["sweep", path(&spec), "--out", path(&out)];
        args.extend_from_slice(extra);
        let o = phalanx(&args);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read_to_string(out).unwrap()
    };
    let a = csv("a.csv", &[]);
    assert_eq!(a, csv("b.csv", &[]));
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines[0], "# phalanx-sweep v1 field=byzantine_count");
    assert_eq!(
        lines[1],
        "byzantine_count,strategy,rep,seed,reordered_ratio,alter_path_ratio,consistency,uncommitted,quiescent,resisted"
    );
    assert_eq!(lines.len(), 2 + 2 * 2 * 3);

    let one = csv("c.csv", &["--strategy", "anchor", "--reps", "1", "--seed", "7"]);
    let rows: Vec<&str> = one.lines().skip(2).collect();
    assert_eq!(rows, ["0,anchor,0,7,0,0,true,0,true,true", "1,anchor,0,7,0,0,true,0,true,true"]);
}

#[test]
fn golden_traces_diverge_at_zero() {
    let dir = TempDir::new().unwrap();
    let o = phalanx(&["golden", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("red(NORMAL), yellow(ALTER)"));
    let o = phalanx(&[
        "diff-traces",
        path(&dir.path().join("manipulation-anchor.txt")),
        path(&dir.path().join("manipulation-timestamp.txt")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("first divergence at index 0"));
}

#[test]
fn truncated_trace_exits_2() {
    let dir = TempDir::new().unwrap();
    let o = phalanx(&["golden", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let full = dir.path().join("manipulation-anchor.txt");
    let text = fs::read_to_string(&full).unwrap();
    let cut = dir.path().join("cut.txt");
    fs::write(&cut, text.lines().take(2).collect::<Vec<_>>().join("\n")).unwrap();
    let o = phalanx(&["diff-traces", path(&full), path(&cut)]);
    assert_eq!(o.status.code(), Some(2));
}
