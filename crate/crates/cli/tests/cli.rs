use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn consim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_consim"))
        .args(args)
        .env_remove("CONSIM_WORKERS")
        .output()
        .expect("binary runs")
}

fn shipped(name: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../specs")
        .join(name);
    p.to_str().unwrap().to_string()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_is_byte_identical_across_invocations_and_worker_counts() {
    let dir = TempDir::new().unwrap();
    let spec = shipped("ladder-br.toml");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert!(
        consim(&["run", "--spec", &spec, "--trials", "40", "--out", s(&a)])
            .status
            .success()
    );
    assert!(consim(&[
        "--workers",
        "1",
        "run",
        "--spec",
        &spec,
        "--trials",
        "40",
        "--out",
        s(&b)
    ])
    .status
    .success());
    let a = fs::read(a).unwrap();
    assert_eq!(a, fs::read(b).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("trial_id,seed,terminated,decision,"));
    assert_eq!(text.lines().count(), 41);
}

#[test]
fn run_writes_csv_to_stdout_and_summary_to_stderr() {
    let out = consim(&[
        "run",
        "--spec",
        &shipped("ben-or-split.json"),
        "--trials",
        "5",
    ]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 6);
    let summary = String::from_utf8(out.stderr).unwrap();
    assert!(summary.contains("\"schema_version\""), "{summary}");
}

#[test]
fn traced_trial_replays_cleanly_and_tampering_is_caught() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("t.trace");
    let csv = dir.path().join("out.csv");
    let out = consim(&[
        "run",
        "--spec",
        &shipped("ben-or-split.json"),
        "--trials",
        "3",
        "--out",
        s(&csv),
        "--trace",
        "2",
        "--trace-out",
        s(&trace),
    ]);
    assert!(out.status.success());
    let ok = consim(&["replay", "--trace", s(&trace), "--quiet"]);
    assert!(ok.status.success());
    assert!(String::from_utf8(ok.stdout)
        .unwrap()
        .contains("0 violation(s)"));

    let text = fs::read_to_string(&trace).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let last = lines.iter().rposition(|l| !l.starts_with('#')).unwrap();
    lines.remove(last - 1);
    let bad = write(&dir, "bad.trace", &(lines.join("\n") + "\n"));
    assert_eq!(
        consim(&["replay", "--trace", s(&bad)]).status.code(),
        Some(1)
    );
}

#[test]
fn check_small_system_is_exhausted() {
    let dir = TempDir::new().unwrap();
    let spec = write(
        &dir,
        "b.toml",
        "protocol = \"ben-or\"\nn = 2\nt = 0\ninputs = \"all\"\n",
    );
    let out = consim(&["check", "--spec", s(&spec), "--max-rounds", "1"]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        stdout.lines().filter(|l| l.contains("exhausted")).count(),
        4,
        "{stdout}"
    );
}

#[test]
fn check_over_node_budget_is_an_error() {
    let out = consim(&[
        "check",
        "--spec",
        &shipped("ben-or-check.toml"),
        "--max-rounds",
        "1",
        "--node-budget",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout).unwrap().contains("refused"));
}

#[test]
fn sweep_emits_one_row_per_n() {
    let out = consim(&[
        "sweep",
        "--spec",
        &shipped("cil-random.toml"),
        "--n",
        "2,4,8",
        "--trials",
        "10",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 4, "{text}");
}

#[test]
fn descending_sweep_is_rejected() {
    let out = consim(&["sweep", "--spec", &shipped("cil-random.toml"), "--n", "8,4"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_specs_exit_with_a_message() {
    let dir = TempDir::new().unwrap();
    let unknown = write(&dir, "u.toml", "protocol = \"paxos\"\nn = 3\n");
    let out = consim(&["run", "--spec", s(&unknown)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(
        err.contains("paxos") && err.contains("ben-or, cil, ladder-br, br-coin"),
        "{err}"
    );

    let overfaulty = write(&dir, "f.toml", "protocol = \"ben-or\"\nn = 4\nt = 2\n");
    assert_eq!(
        consim(&["run", "--spec", s(&overfaulty)]).status.code(),
        Some(1)
    );

    let typo = write(&dir, "t.toml", "protocol = \"cil\"\nn = 3\ntrails = 5\n");
    assert_eq!(consim(&["run", "--spec", s(&typo)]).status.code(), Some(1));

    assert_eq!(
        consim(&["run", "--spec", "/nonexistent/spec.toml"])
            .status
            .code(),
        Some(1)
    );
}
