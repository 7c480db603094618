use std::path::Path;
use std::process::{Command, Output};

fn banditmesh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_banditmesh"))
        .args(args)
        .env_remove("BANDITMESH_THREADS")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn lists_every_kind() {
    let out = banditmesh(&["list-experiments"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for kind in [
        "mom",
        "hub-size",
        "hub-recurrence",
        "broadcast-delay",
        "homog-regret",
        "heterog-regret",
        "calibrate-kappa",
    ] {
        assert!(
            text.lines().any(|l| l.starts_with(kind)),
            "{kind} missing from:\n{text}"
        );
    }
}

#[test]
fn run_honours_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "experiment = \"homog-regret\"\nclients = 8\narms = 2\nhorizon = 80\nkappa = 0.2\n",
    );
    let out_dir = dir.path().join("out");
    let out = banditmesh(&[
        "run",
        &cfg,
        "--seed",
        "5",
        "--replications",
        "4",
        "--threads",
        "2",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 5);
    assert_eq!(summary["regret"]["per_replication"].as_array().unwrap().len(), 4);
    assert!(out_dir.join("trace.csv").exists());
}

#[test]
fn thread_count_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "experiment = \"mom\"\n[mom]\ntrials = 50\n");
    let out_dir = dir.path().join("out");
    let out = Command::new(env!("CARGO_BIN_EXE_banditmesh"))
        .args(["run", &cfg, "--out", out_dir.to_str().unwrap()])
        .env("BANDITMESH_THREADS", "0x")
        .output()
        .unwrap();
    // An unparsable value is rejected, which shows the variable is read.
    assert!(!out.status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_banditmesh"))
        .args(["run", &cfg, "--out", out_dir.to_str().unwrap()])
        .env("BANDITMESH_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_kind_names_the_valid_ones() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "experiment = \"regret\"\n");
    let out = banditmesh(&["run", &cfg]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("regret"), "{err}");
    assert!(
        err.contains("homog-regret") && err.contains("calibrate-kappa"),
        "{err}"
    );
}

#[test]
fn calibrate_kappa_writes_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "experiment = \"calibrate-kappa\"\nclients = 30\n");
    let out_dir = dir.path().join("out");
    let out = banditmesh(&[
        "calibrate-kappa",
        &cfg,
        "--replications",
        "40",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let est: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("kappa.json")).unwrap()).unwrap();
    assert!(est["kappa"].as_f64().unwrap() > 0.0);
    assert_eq!(est["clients"], 30);
}
