//! Command-line behavior: exit codes, output layout, and byte-identical
//! reruns from the same configuration and seed.

use std::path::Path;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_polylab")
}

fn tmp_dir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("polylab-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn unknown_preset_is_a_config_error() {
    let dir = tmp_dir("unknown");
    let out = Command::new(bin())
        .args(["frobnicate", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn bad_config_reports_line_number() {
    let dir = tmp_dir("badcfg");
    let cfg = dir.join("bad.cfg");
    std::fs::write(&cfg, "t = 4\nnot a key value pair\n").unwrap();
    let out = Command::new(bin())
        .args(["scan", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "stderr: {err}");
}

#[test]
fn missing_config_file_is_io_error() {
    let dir = tmp_dir("noio");
    let out = Command::new(bin())
        .args(["scan", "--config", "/nonexistent/path.cfg", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

fn read_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in walk(dir) {
        let rel = entry.strip_prefix(dir).unwrap().to_string_lossy().to_string();
        if rel.ends_with("manifest.json") {
            continue; // wall time differs between runs
        }
        out.push((rel, std::fs::read(&entry).unwrap()));
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push(p);
            }
        }
    }
    files
}

#[test]
fn scan_rerun_is_byte_identical() {
    let cfg_dir = tmp_dir("scancfg");
    let cfg = cfg_dir.join("small.cfg");
    std::fs::write(
        &cfg,
        "beta_grid = 0.3, 0.6\nnu_grid = 0.8, 1.2\nt = 2\nn_env = 30\nn_paths = 32\n",
    )
    .unwrap();
    let run = |tag: &str| {
        let dir = tmp_dir(tag);
        let out = Command::new(bin())
            .args(["scan", "--seed", "4711", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&dir)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        dir
    };
    let a = run("scan-a");
    let b = run("scan-b");
    let fa = read_sorted(&a);
    let fb = read_sorted(&b);
    assert!(!fa.is_empty());
    assert_eq!(fa.len(), fb.len());
    for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        assert_eq!(ba, bb, "file {na} differs between reruns");
    }
    // Expected layout: per-cell CSVs, a heatmap, a manifest.
    assert!(a.join("scan/cell-0-0.csv").exists());
    assert!(a.join("scan/plots/psi_heatmap.svg").exists());
    assert!(a.join("scan/manifest.json").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("scan/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["preset"], "scan");
    assert_eq!(manifest["seed"], 4711);
}

#[test]
fn seed_env_var_is_honored() {
    let cfg_dir = tmp_dir("seedcfg");
    let cfg = cfg_dir.join("small.cfg");
    std::fs::write(
        &cfg,
        "beta_grid = 0.5\nnu_grid = 1.0\nt = 1\nn_env = 30\nn_paths = 16\n",
    )
    .unwrap();
    let dir = tmp_dir("seedenv");
    let out = Command::new(bin())
        .args(["scan", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .env("POLYLAB_SEED", "999")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("scan/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], 999);
}

#[test]
fn verify_preset_exits_zero() {
    let dir = tmp_dir("verify");
    let out = Command::new(bin())
        .args(["verify", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS telescoping-product"));
    assert!(!stdout.contains("FAIL"));
    assert!(dir.join("verify/results.csv").exists());
    assert!(dir.join("verify/manifest.json").exists());
}

#[test]
fn doob_preset_runs_clean() {
    let dir = tmp_dir("doob");
    let cfg = dir.join("d.cfg");
    std::fs::write(&cfg, "t = 2\nn_paths = 96\n").unwrap();
    let out = Command::new(bin())
        .args(["doob", "--seed", "7", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("doob/decomposition.csv").exists());
    assert!(dir.join("doob/localization_sets.csv").exists());
    assert!(dir.join("doob/plots/compensator.svg").exists());
}
