use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn harmonium(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_harmonium")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    harmonium(&args)
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn small_switch(k: f64) -> Value {
    json!({
        "interaction": { "kind": "moshinsky", "k": k },
        "frequency": { "kind": "sudden_switch", "omega0": 1.0, "omega1": 1.2 },
        "grids": { "r_max": 12.0, "n_points": 361, "t_final": 1.0, "n_steps": 400, "k_max": 4.0, "n_k": 21 },
        "stride": 4
    })
}

#[test]
fn ground_state_energy_of_free_pair() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({
        "interaction": { "kind": "none" },
        "frequency": { "kind": "constant", "omega0": 1.0 },
        "grids": { "r_max": 12.0, "n_points": 601, "t_final": 0.0, "n_steps": 0 }
    });
    let path = write_config(tmp.path(), "gs.json", &cfg);
    let out = tmp.path().join("out");
    let res = run("ground-state", &path, &out, &[]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let m = manifest(&out);
    let e = m["values"]["e_rm"].as_f64().unwrap();
    assert!((e - 1.5).abs() < 1e-6, "{e}");
    assert_eq!(m["pass"], true);
}

#[test]
fn manifest_lists_every_file_with_its_hash() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "c.json", &small_switch(0.2));
    let out = tmp.path().join("out");
    let res = run("roundtrip", &path, &out, &[]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let m = manifest(&out);
    let listed: Vec<String> = m["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap().to_string()).collect();
    let mut on_disk: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    assert_eq!(listed, on_disk);
    for f in m["files"].as_array().unwrap() {
        let bytes = fs::read(out.join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
    }
    let cfg_bytes = fs::read(&path).unwrap();
    assert_eq!(m["config_sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&cfg_bytes)));
}

#[test]
fn outputs_are_deterministic_across_runs_and_workers() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "c.json", &small_switch(0.1));
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(run("density", &path, &a, &[]).status.code(), Some(0));
    assert_eq!(run("density", &path, &b, &["--jobs", "3"]).status.code(), Some(0));
    assert_eq!(fs::read(a.join("density.csv")).unwrap(), fs::read(b.join("density.csv")).unwrap());
    assert_eq!(manifest(&a)["files"], manifest(&b)["files"]);
}

#[test]
fn negative_frequency_is_rejected_without_outputs() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_switch(0.0);
    cfg["frequency"]["omega0"] = json!(-1.0);
    let path = write_config(tmp.path(), "bad.json", &cfg);
    let out = tmp.path().join("out");
    let res = run("density", &path, &out, &[]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("bad.json:") && err.contains("omega0"), "{err}");
}

#[test]
fn syntax_errors_carry_the_line() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("broken.json");
    fs::write(&path, "{\n  \"frequency\": {\"kind\": \"constant\", \"omega0\": 1.0},\n  \"grids\": {\"r_max\": 12,,}\n}\n").unwrap();
    let res = run("density", &path, &tmp.path().join("out"), &[]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("broken.json:3:"));
}

#[test]
fn unbound_relative_motion_and_bad_overrides_are_config_errors() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "unbound.json", &small_switch(0.6));
    assert_eq!(run("density", &path, &tmp.path().join("o1"), &[]).status.code(), Some(2));
    let ok = write_config(tmp.path(), "ok.json", &small_switch(0.1));
    for extra in [&["--tol", "bogus=1"][..], &["--tol", "norm=-1"], &["--stride", "7"]] {
        let res = run("density", &ok, &tmp.path().join("o2"), extra);
        assert_eq!(res.status.code(), Some(2), "{extra:?}");
    }
    let mut cfg = small_switch(0.1);
    cfg["checks"] = json!(["hpt"]);
    let path = write_config(tmp.path(), "checks.json", &cfg);
    assert_eq!(run("density", &path, &tmp.path().join("o3"), &[]).status.code(), Some(2));
    // too small a box for the density tail
    let mut cfg = small_switch(0.1);
    cfg["grids"]["r_max"] = json!(4.0);
    let path = write_config(tmp.path(), "box.json", &cfg);
    assert_eq!(run("density", &path, &tmp.path().join("o4"), &[]).status.code(), Some(2));
}

#[test]
fn tightened_tolerance_fails_the_check() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "c.json", &small_switch(0.2));
    let out = tmp.path().join("out");
    let res = run("roundtrip", &path, &out, &["--tol", "roundtrip=1e-12"]);
    assert_eq!(res.status.code(), Some(1));
    let m = manifest(&out);
    assert_eq!(m["pass"], false);
    assert_eq!(m["checks"][0]["name"], "roundtrip");
    assert_eq!(m["tolerances"]["roundtrip"], 1e-12);
}

#[test]
fn verify_moshinsky_passes_on_a_sudden_switch() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "c.json", &small_switch(0.2));
    let out = tmp.path().join("out");
    let res = run("verify-moshinsky", &path, &out, &["--jobs", "2"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let dev = manifest(&out)["values"]["max_half_deviation"].as_f64().unwrap();
    assert!(dev < 1e-3, "{dev}");
}

#[test]
fn verify_moshinsky_requires_moshinsky() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_switch(0.0);
    cfg["interaction"] = json!({ "kind": "softened_coulomb", "lambda": 1.0, "a": 0.5 });
    let path = write_config(tmp.path(), "c.json", &cfg);
    assert_eq!(run("verify-moshinsky", &path, &tmp.path().join("out"), &[]).status.code(), Some(2));
}

#[test]
fn residual_checks_pass_on_shipped_style_scenarios() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "c.json", &small_switch(0.2));
    for cmd in ["check-continuity", "check-dvt", "invert-ks"] {
        let out = tmp.path().join(cmd);
        let res = run(cmd, &path, &out, &[]);
        assert_eq!(res.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&res.stdout));
    }
    let stat = json!({
        "interaction": { "kind": "moshinsky", "k": 0.2 },
        "frequency": { "kind": "constant", "omega0": 1.0 },
        "grids": { "r_max": 12.0, "n_points": 601, "t_final": 0.02, "n_steps": 4 }
    });
    let path = write_config(tmp.path(), "static.json", &stat);
    let res = run("check-dvt-interacting", &path, &tmp.path().join("dvt"), &[]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stdout));
}

#[test]
fn hpt_and_causality_commands() {
    let tmp = TempDir::new().unwrap();
    let hpt = json!({
        "frequency": { "kind": "constant", "omega0": 1.0 },
        "grids": { "r_max": 12.0, "n_points": 241, "t_final": 10.0, "n_steps": 2000 },
        "stride": 10,
        "hpt": { "drive": { "omega0": 1.0, "e0": 0.1, "omega_drive": 0.7 }, "x_max": 10.0, "n_points": 801 }
    });
    let path = write_config(tmp.path(), "hpt.json", &hpt);
    assert_eq!(run("check-hpt", &path, &tmp.path().join("hpt"), &[]).status.code(), Some(0));

    let resp = json!({
        "frequency": { "kind": "constant", "omega0": 1.0 },
        "grids": { "r_max": 12.0, "n_points": 241, "t_final": 2.0, "n_steps": 400 },
        "response": { "kernel": { "kind": "damped_sine", "omega": 1.0, "gamma": 0.3 }, "drive": { "omega": 1.3 } },
        // first-order recovery at dt = 0.005
        "tolerances": { "volterra": 1e-2 }
    });
    let path = write_config(tmp.path(), "resp.json", &resp);
    let out = tmp.path().join("resp");
    let res = run("causality-roundtrip", &path, &out, &[]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stdout));
    let m = manifest(&out);
    let names: Vec<&str> = m["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["volterra", "resolvent", "causality"]);
    // lower triangle only: (n+1)(n+2)/2 rows plus the header
    let kernel = fs::read_to_string(out.join("kernel.csv")).unwrap();
    assert_eq!(kernel.lines().count(), 401 * 402 / 2 + 1);
}

#[test]
fn extract_chi_is_causal_and_nonlinear_steps_are_numeric_failures() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = json!({
        "frequency": { "kind": "constant", "omega0": 1.0 },
        "grids": { "r_max": 10.0, "n_points": 201, "t_final": 1.0, "n_steps": 400 },
        "chi": { "impulses": [ { "site": 20, "slice": 100 }, { "site": 30, "slice": 250 } ], "basis_stride": 4 }
    });
    let path = write_config(tmp.path(), "chi.json", &cfg);
    let out = tmp.path().join("chi");
    let res = run("extract-chi", &path, &out, &[]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(out.join("chi_column_1.csv").exists());

    cfg["chi"]["amplitude"] = json!(1e4);
    let path = write_config(tmp.path(), "chi_big.json", &cfg);
    assert_eq!(run("extract-chi", &path, &tmp.path().join("big"), &[]).status.code(), Some(3));
}
