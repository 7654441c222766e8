use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn abpf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abpf"))
        .args(args)
        .env("ABPF_THREADS", "1")
        .output()
        .expect("spawn abpf")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn unknown_key_exits_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = abpf(&["run-primal", "--out", &out_arg(tmp.path()), "--set", "nonsense=3"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("nonsense"), "{err}");
}

#[test]
fn unknown_key_in_file_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "grid = 8,8,8\n# comment\nt_finale = 1\n").unwrap();
    let o = abpf(&[
        "run-primal",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        &out_arg(&tmp.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("t_finale"));
}

#[test]
fn zero_epsilon_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let o = abpf(&["run-dual", "--out", &out_arg(tmp.path()), "--set", "epsilon=0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("epsilon > 0"));
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_abpf"))
        .args(["verify", "--only", "12"])
        .env("ABPF_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn primal_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let dir = tmp.path().join(name);
        let o = abpf(&[
            "run-primal",
            "--out",
            &out_arg(&dir),
            "--set",
            "grid=8",
            "--set",
            "pe=1",
            "--set",
            "t_final=0.04",
            "--set",
            "dt=0.01",
            "--set",
            "snap_every=0.02",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        dir
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["diagnostics.csv", "ledger.csv", "config.resolved", "snap_0002.abpf"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn resolved_config_replays_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    let o = abpf(&[
        "mollify",
        "--out",
        &out_arg(&first),
        "--set",
        "grid=8",
        "--set",
        "epsilon=0.05",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let resolved = first.join("config.resolved");
    let second = tmp.path().join("second");
    let o = abpf(&[
        "mollify",
        "--config",
        resolved.to_str().unwrap(),
        "--out",
        &out_arg(&second),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read(first.join("budget.csv")).unwrap(),
        fs::read(second.join("budget.csv")).unwrap()
    );
    assert_eq!(
        fs::read(first.join("f0_eps.abpf")).unwrap(),
        fs::read(second.join("f0_eps.abpf")).unwrap()
    );
}

#[test]
fn verify_runs_selected_criteria() {
    let o = abpf(&["verify", "--only", "12", "--only", "10"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{text}");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("[PASS] criterion 12"));
    assert!(lines[1].starts_with("[PASS] criterion 10"));
}

#[test]
fn verify_rejects_unknown_criterion() {
    let o = abpf(&["verify", "--only", "13"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn stationary_scan_writes_rates() {
    let tmp = tempfile::tempdir().unwrap();
    let o = abpf(&[
        "stationary-scan",
        "--out",
        &out_arg(tmp.path()),
        "--set",
        "kmax=1",
        "--set",
        "coupled=off",
        "--set",
        "pe=1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(tmp.path().join("rates.csv")).unwrap();
    assert_eq!(csv.lines().count(), 28);
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(5) == Some("1")));
}

#[test]
fn fixed_point_strict_passes_for_small_data() {
    let tmp = tempfile::tempdir().unwrap();
    let o = abpf(&[
        "fixed-point",
        "--strict",
        "--out",
        &out_arg(tmp.path()),
        "--set",
        "grid=8",
        "--set",
        "pe=1",
        "--set",
        "t_final=0.2",
        "--set",
        "dt=0.02",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(tmp.path().join("summary.txt")).unwrap();
    assert!(summary.contains("Converged"));
}
