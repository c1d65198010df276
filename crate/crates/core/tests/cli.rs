use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn necc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_necc")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(shipped("pendulum.json")).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

#[test]
fn shipped_configs_validate() {
    for name in ["pendulum.json", "mass-spring-damper.json"] {
        let o = necc(&["validate", s(&shipped(name))]);
        assert_eq!(code(&o), 0, "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn malformed_json_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"schema_version\": 1,\n  \"margin\": 0.5,,\n}").unwrap();
    let o = necc(&["validate", s(&path)]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3, column"), "{err}");
}

#[test]
fn invalid_values_and_missing_files_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), |v| v["margin"] = (-1.0).into());
    assert_eq!(code(&necc(&["validate", s(&path)])), 2);
    let path = write_config(dir.path(), |v| v["surprise"] = 1.into());
    assert_eq!(code(&necc(&["validate", s(&path)])), 2);
    assert_eq!(code(&necc(&["validate", s(&dir.path().join("absent.json"))])), 2);
    assert_eq!(code(&necc(&["export-surface", s(&dir.path().join("absent.json"))])), 2);
}

#[test]
fn train_verify_export_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = shipped("pendulum.json");
    let o = necc(&["train", s(&cfg), "--out-dir", s(&out), "--format", "json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "history.json", "model.json"] {
        assert!(out.join(f).exists(), "{f}");
    }

    let report = out.join("report.json");
    let model = out.join("model.json");
    let o = necc(&["verify-bound", s(&report), s(&model)]);
    assert_eq!(code(&o), 0);
    let b: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(b["pass"], true);

    // a report claiming ε = 0 demands z̄ = z* exactly
    let mut r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    r["epsilon"] = 0.0.into();
    let forged = dir.path().join("forged.json");
    std::fs::write(&forged, r.to_string()).unwrap();
    assert_eq!(code(&necc(&["verify-bound", s(&forged), s(&model)])), 1);

    let o = necc(&["export-surface", s(&model), "--grid", "7x5", "--out-dir", s(&out)]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(out.join("surface.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "q,p,V");
    assert_eq!(lines.len(), 36);
    assert!(lines[1].starts_with("-2.0,-2.0,"));
    assert!(lines[35].starts_with("2.0,2.0,"));

    let o = necc(&["simulate", s(&cfg), "--model", s(&model), "--out-dir", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let traj = std::fs::read_to_string(out.join("trajectories/trajectory_00.csv")).unwrap();
    assert!(traj.starts_with("t,z_1,z_2,z_3,V,H_total,v,v_c\n"));
    assert_eq!(traj.lines().count(), 5002);
}

#[test]
fn untrained_model_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |v| v["optimizer"]["epochs"] = 1.into());
    let out = dir.path().join("out");
    assert_eq!(code(&necc(&["train", s(&cfg), "--out-dir", s(&out)])), 0);
    let o = necc(&["verify-bound", s(&out.join("report.json")), s(&out.join("model.json"))]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sweep_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = necc(&["sweep-a", s(&shipped("pendulum.json")), "--values", "0.25,0.5", "--out-dir", s(dir.path()), "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "a,epsilon,bound,error,pass");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0.25,") && lines[1].ends_with(",true"));
}

#[test]
fn seed_flag_changes_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |v| v["optimizer"]["epochs"] = 5.into());
    let run = |seed: &str, sub: &str| {
        let out = dir.path().join(sub);
        assert_eq!(code(&necc(&["train", s(&cfg), "--seed", seed, "--out-dir", s(&out)])), 0);
        let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("model.json")).unwrap()).unwrap();
        m["networks"].to_string()
    };
    let (a, b, c) = (run("1", "a"), run("1", "b"), run("2", "c"));
    assert_eq!(a, b);
    assert_ne!(a, c);
}
