use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dfodt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dfodt"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn small_config(dir: &Path) {
    std::fs::write(dir.join("run.toml"), "[grid]\nnx = 32\nny = 32\nnz = 32\npitch = 0.3\n").unwrap();
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).unwrap();
    serde_json::from_str(line).unwrap()
}

#[test]
fn compare_of_a_volume_with_itself_is_one() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path());
    assert!(dfodt(dir.path(), &["-c", "run.toml", "phantom"]).status.success());
    let out = dfodt(dir.path(), &["compare", "out/phantom.vol", "out/phantom.vol"]);
    assert!(out.status.success());
    let m: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((m["ncc"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/compare.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "compare");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 1);
}

#[test]
fn dark_field_odt_support_without_cutoff_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path());
    let out = dfodt(dir.path(), &["-c", "run.toml", "ctf", "--modality", "dark_field_odt"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "config");
    let ok = dfodt(dir.path(), &["-c", "run.toml", "ctf", "--modality", "dark_field_odt", "--cutoff-fov", "2"]);
    assert!(ok.status.success());
    assert!(dir.path().join("out/ctf_dark_field_odt.vol").exists());
}

#[test]
fn unknown_config_key_and_bad_usage_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[gp]\niterationz = 3\n").unwrap();
    assert_eq!(dfodt(dir.path(), &["-c", "bad.toml", "phantom"]).status.code(), Some(2));
    assert_eq!(dfodt(dir.path(), &["--set", "grid.bogus=1", "phantom"]).status.code(), Some(2));
    assert_eq!(dfodt(dir.path(), &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn missing_input_exits_3_and_degenerate_inputs_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = dfodt(dir.path(), &["compare", "nope.vol", "nope.vol"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "io");

    small_config(dir.path());
    std::fs::write(dir.path().join("flat.toml"), "[grid]\nnx = 32\nny = 32\nnz = 32\npitch = 0.3\n[phantom]\nn_medium = 1.574\n[phantom.variant]\ntype = \"sphere\"\ncenter = [0.0, 0.0, 0.0]\nradius = 1.0\nn_inside = 1.574\n").unwrap();
    assert!(dfodt(dir.path(), &["-c", "flat.toml", "phantom"]).status.success());
    let out = dfodt(dir.path(), &["compare", "out/phantom.vol", "out/phantom.vol"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn staged_commands_match_the_run_command() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path());
    for cmd in ["phantom", "simulate", "reconstruct", "darkfield"] {
        let out = dfodt(dir.path(), &["-c", "run.toml", "--output-dir", "staged", cmd]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert!(dfodt(dir.path(), &["-c", "run.toml", "--output-dir", "whole", "run"]).status.success());
    for f in ["phantom.vol", "fields.stack", "reconstruction.vol", "darkfield.vol", "gp_log.jsonl"] {
        let a = std::fs::read(dir.path().join("staged").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("whole").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let out = dfodt(dir.path(), &["-c", "run.toml", "--output-dir", "whole", "slice", "--plane", "xz", "--index", "16"]);
    assert!(out.status.success());
    assert!(dir.path().join("whole/slice_xz_16.pgm").exists());
    assert!(dir.path().join("whole/slice_xz_16.pgm.txt").exists() || dir.path().join("whole/slice_xz_16.txt").exists());
}

#[test]
fn manifest_hashes_config_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path());
    assert!(dfodt(dir.path(), &["-c", "run.toml", "--seed", "3", "phantom"]).status.success());
    let m: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/phantom.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["tool"], "dfodt");
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    let outputs = m["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 1);
    assert!(m["config"].as_str().unwrap().contains("seed = 3"));
}
