use std::fs;
use std::process::Command;

use vemflow_core::mesh::{load_mesh, validate_mesh, LoadOptions};

fn vemflow() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vemflow"))
}

#[test]
fn mesh_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hex.mesh");
    let out = vemflow()
        .args(["mesh", "--family", "hexagon", "--N", "4", "-o"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mesh = load_mesh(&path, LoadOptions { strict: true }).unwrap();
    validate_mesh(&mesh).unwrap();
    assert!((mesh.total_area() - 1.0).abs() < 1e-10);
}

#[test]
fn study_writes_csv_and_plotdata_converts_it() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("study.csv");
    let out = vemflow()
        .args(["study", "--test", "1", "--family", "quad", "--N", "2,4", "-o"])
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("family,N,h,"));
    assert!(lines[1].starts_with("quad,2,") && lines[2].starts_with("quad,4,"));

    let out = vemflow().arg("plotdata").arg(&csv).output().unwrap();
    assert!(out.status.success());
    let plot = String::from_utf8(out.stdout).unwrap();
    assert_eq!(plot.lines().count(), 3);
    assert!(plot.lines().nth(2).unwrap().starts_with("quad,4,"));
}

#[test]
fn rejects_bad_arguments() {
    for args in [
        &["study", "--test", "3", "--family", "quad"][..],
        &["study", "--test", "1", "--nu", "0.1", "--family", "quad"],
        &["study", "--test", "4", "--family", "quad"],
        &["study", "--test", "3", "--nu", "-1", "--family", "quad"],
        &["mesh", "--family", "octagon", "--N", "4", "-o", "x"],
    ] {
        let out = vemflow().args(args).output().unwrap();
        assert!(!out.status.success(), "{args:?} should fail");
    }
}

#[test]
fn non_convergence_sets_exit_code() {
    let out = vemflow()
        .args([
            "study",
            "--test",
            "2",
            "--family",
            "quad",
            "--N",
            "2",
            "--max-iter",
            "1",
            "--tol",
            "1e-14",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}
