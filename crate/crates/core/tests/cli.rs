//! The `mfpid` binary: verbs, outputs and exit codes.

use std::path::{Path, PathBuf};
use std::process::Command;

use mfpid::cli::preset;

fn mfpid(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_mfpid"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn small_config(dir: &Path, name: &str) -> PathBuf {
    let mut cfg = preset(name).unwrap();
    cfg.sim.batch = 300;
    cfg.sim.n_steps = 200;
    cfg.sim.record_paths = 5;
    let path = dir.join(format!("{name}.toml"));
    std::fs::write(&path, cfg.to_toml_string().unwrap()).unwrap();
    path
}

fn find(dir: &Path, file: &str) -> bool {
    std::fs::read_dir(dir).unwrap().flatten().any(|e| {
        let p = e.path();
        if p.is_dir() {
            find(&p, file)
        } else {
            p.file_name().is_some_and(|n| n == file)
        }
    })
}

#[test]
fn validate_presets() {
    for name in ["scenario-a", "scenario-b", "d-sweep", "lqg-tcl"] {
        let (code, stdout, _) = mfpid(&["validate", "--preset", name]);
        assert_eq!(code, 0, "{name}");
        assert!(stdout.contains("ok"));
    }
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(small_config(dir.path(), "scenario-b"))
        .unwrap()
        .replace("weights = [0.6, 0.4]", "weights = [0.6, 0.5]");
    assert!(text.contains("0.5]"), "preset weights changed");
    std::fs::write(&bad, text).unwrap();
    let (code, _, stderr) = mfpid(&["validate", "--config", bad.to_str().unwrap()]);
    assert_eq!(code, 1, "{stderr}");
    let (code, _, _) = mfpid(&["bridge", "--config", bad.to_str().unwrap()]);
    assert_eq!(code, 1);
    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, "name = \"x\"\nbogus = 1\n").unwrap();
    assert_eq!(
        mfpid(&["validate", "--config", unknown.to_str().unwrap()]).0,
        1
    );
    assert_ne!(mfpid(&["bridge", "--preset", "no-such-preset"]).0, 0);
}

#[test]
fn divergence_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("huge.toml");
    std::fs::write(
        &path,
        "name = \"huge\"\n[sim]\nbatch = 50\nn_steps = 50\n[target]\nweights = [1.0]\nmeans = [[1e300]]\nstds = [[0.3]]\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let (code, _, stderr) = mfpid(&[
        "bridge",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2, "{stderr}");
}

#[test]
fn bridge_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "scenario-a");
    let out = dir.path().join("out");
    let (code, stdout, stderr) = mfpid(&[
        "bridge",
        "--config",
        cfg.to_str().unwrap(),
        "--modes",
        "mf,ia0",
        "--seed",
        "3",
        "--parallel",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("saving mf vs ia0"));
    for file in [
        "energy.csv",
        "terminal.csv",
        "trajectories.csv",
        "mean.csv",
        "summary.json",
    ] {
        assert!(find(&out, file), "missing {file}");
    }
}

#[test]
fn lqg_writes_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lqg");
    let mut cfg = preset("lqg-tcl").unwrap();
    cfg.lqg.as_mut().unwrap().mc_batch = 500;
    let path = dir.path().join("lqg.toml");
    std::fs::write(&path, cfg.to_toml_string().unwrap()).unwrap();
    let (code, stdout, stderr) = mfpid(&[
        "lqg",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("E_mf"));
    let csv = std::fs::read_to_string(out.join("lqg.csv")).unwrap();
    assert!(csv.lines().next().unwrap().starts_with("t,"));
    assert!(csv.lines().count() > 100);
}
