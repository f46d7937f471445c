//! End-to-end checks of the batch front-end: exit codes, determinism of
//! the kernel dump, and the slice exporter.

use std::fs;
use std::path::Path;
use std::process::Command;

const SMALL_CONFIG: &str = "
[domain]
l_planar = 2.0
n_x = 16
ell = 1.0
n_z = 8

[potential]
kind = constant
value = 1.0

[kernel]
quad_tol = 1e-8

[solver]
class = radial
seed = 3
restarts = 1
seed_width = 0.5
seed_width_z = 0.5
max_iters = 2000
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chainsolve"))
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

#[test]
fn kernel_build_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("slab.cfg");
    write(&cfg, SMALL_CONFIG);
    for run in ["one", "two"] {
        let out = dir.path().join(run);
        let status = bin()
            .args(["kernel", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        assert!(out.join("kernel_meta.json").exists());
    }
    let a = fs::read(dir.path().join("one/kernel_table.bin")).unwrap();
    let b = fs::read(dir.path().join("two/kernel_table.bin")).unwrap();
    assert_eq!(a, b, "kernel dumps differ between identical runs");
}

#[test]
fn missing_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    write(&cfg, &SMALL_CONFIG.replace("ell = 1.0\n", ""));
    let output = bin()
        .args(["kernel", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("ell"), "message should name the missing key: {stderr}");
}

#[test]
fn zero_potential_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("zero.cfg");
    write(&cfg, &SMALL_CONFIG.replace("value = 1.0", "value = 0.0"));
    let output = bin()
        .args(["solve", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn solve_writes_reports_and_slices_export() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("slab.cfg");
    write(&cfg, SMALL_CONFIG);
    let out = dir.path().join("out");
    let status = bin()
        .args(["solve", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    for key in ["norm_a_sq", "V1", "V2", "V0", "log_norm_sq", "phi"] {
        assert!(report["energy"].get(key).is_some(), "missing energy key {key}");
    }
    assert!(out.join("trace.csv").exists());
    assert!(out.join("field.bin").exists());
    // slice export round-trip
    let slice = dir.path().join("slice.csv");
    let status = bin()
        .args(["export-slice", "--field"])
        .arg(out.join("field.bin"))
        .args(["--plane", "x3=0.0", "--out"])
        .arg(&slice)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&slice).unwrap();
    assert!(text.starts_with("x1,x2,x3,value"));
    assert_eq!(text.lines().count(), 1 + 16 * 16);
}
