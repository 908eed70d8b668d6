use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn udfrecon(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_udfrecon")).current_dir(dir).args(args).output().expect("spawn udfrecon")
}

fn ok_json(out: Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

fn err_json(out: Output) -> Value {
    assert!(!out.status.success());
    serde_json::from_slice(&out.stderr).expect("stderr is json")
}

const TINY: &[&str] = &["--set", "k_backbone=6", "--set", "widths=4,6", "--set", "pos_hidden=4", "--set", "head_hidden=6", "--set", "batch=64"];

#[test]
fn gen_train_grid_extract_slices() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let g = ok_json(udfrecon(p, &["gen", "--shape", "sphere", "--points", "400", "--seed", "2", "--out", "s.xyz"]));
    assert_eq!(g["points"], 400);
    assert_eq!(std::fs::read_to_string(p.join("s.xyz")).unwrap().lines().count(), 400);

    let mut args = vec!["train", "--input", "s.xyz", "--steps", "15", "--out", "model", "--quiet"];
    args.extend_from_slice(TINY);
    let t = ok_json(udfrecon(p, &args));
    assert_eq!(t["steps"], 15);
    for f in ["estimator.ckpt", "config.txt", "history.csv"] {
        assert!(p.join("model").join(f).exists(), "{f}");
    }
    assert_eq!(std::fs::read_to_string(p.join("model/history.csv")).unwrap().lines().count(), 16);

    let gr = ok_json(udfrecon(p, &["grid", "--model", "model", "--input", "s.xyz", "--resolution", "20", "--out", "g.udfg"]));
    assert_eq!(gr["vertices"], 8000);

    let r = ok_json(udfrecon(p, &["extract", "--grid", "g.udfg", "--input", "s.xyz", "--sign", "baseline", "--out", "m.obj", "--report", "r.json"]));
    assert_eq!(r["mode"], "baseline");
    assert!(p.join("m.obj").exists() && p.join("r.json").exists());

    let e = ok_json(udfrecon(p, &["eval", "--mesh", "m.obj", "--reference", "s.xyz", "--samples", "2000"]));
    assert!(e["cd1"].as_f64().unwrap().is_finite());

    let s = ok_json(udfrecon(p, &["slices", "--grid", "g.udfg", "--index", "10", "--out", "sl"]));
    assert_eq!(s["files"].as_array().unwrap().len(), 6);
    let pgm = std::fs::read(p.join("sl/udf_z_10.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5"));
}

#[test]
fn eval_runs_the_pipeline_with_oracle_signs() {
    let d = tempfile::tempdir().unwrap();
    let mut args = vec!["eval", "--shape", "sphere", "--points", "300", "--resolution", "20", "--sign", "oracle", "--samples", "2000", "--steps", "10", "--out", "run"];
    args.extend_from_slice(TINY);
    let rec = ok_json(udfrecon(d.path(), &args));
    assert!(rec["metrics"]["cd1"].as_f64().unwrap() > 0.0);
    assert!(rec["times"]["total"].as_f64().unwrap() > 0.0);
    assert!(d.path().join("run/record.json").exists());
}

#[test]
fn train_sign_writes_model_and_accuracy() {
    let d = tempfile::tempdir().unwrap();
    let out = ok_json(udfrecon(d.path(), &["train-sign", "--sign-head", "l2", "--steps", "10", "--resolution", "17", "--points", "400", "--out", "sign", "--quiet"]));
    assert_eq!(out["head"], "l2");
    let acc = out["heldout_accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert!(d.path().join("sign/sign.ckpt").exists());
    let cfg: Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("sign/sign.json")).unwrap()).unwrap();
    assert_eq!(cfg["steps"], 10);
}

#[test]
fn errors_are_json_on_stderr() {
    let d = tempfile::tempdir().unwrap();
    let e = err_json(udfrecon(d.path(), &["gen", "--shape", "blob", "--out", "x.xyz"]));
    assert_eq!(e["error"], "BadShape");
    let e = err_json(udfrecon(d.path(), &["train", "--input", "missing.xyz", "--out", "m"]));
    assert_eq!(e["error"], "Io");
    let e = err_json(udfrecon(d.path(), &["train", "--input", "a.xyz", "--out", "m", "--set", "nonsense"]));
    assert!(e["message"].as_str().unwrap().contains("KEY=VALUE"));
    let e = err_json(udfrecon(d.path(), &["frobnicate"]));
    assert_eq!(e["error"], "Usage");
    std::fs::write(d.path().join("g.udfg"), b"not a grid").unwrap();
    std::fs::write(d.path().join("a.xyz"), b"0 0 0\n1 1 1\n").unwrap();
    let e = err_json(udfrecon(d.path(), &["extract", "--grid", "g.udfg", "--input", "a.xyz", "--sign", "baseline", "--out", "m.obj"]));
    assert_ne!(e["error"], "Usage");
}

#[test]
fn prior_mode_needs_several_inputs() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok_json(udfrecon(p, &["gen", "--shape", "sphere", "--points", "200", "--out", "a.xyz"]));
    ok_json(udfrecon(p, &["gen", "--shape", "box", "--points", "200", "--out", "b.xyz"]));
    let mut args = vec!["train-prior", "--input", "a.xyz", "--out", "prior", "--steps", "4", "--quiet"];
    args.extend_from_slice(TINY);
    let e = err_json(udfrecon(p, &args));
    assert_eq!(e["error"], "EmptyDataset");
    let mut args = vec!["train", "--mode", "prior", "--input", "a.xyz", "--input", "b.xyz", "--out", "prior", "--steps", "4", "--quiet"];
    args.extend_from_slice(TINY);
    let t = ok_json(udfrecon(p, &args));
    assert_eq!(t["mode"], "prior");
    assert_eq!(t["shapes"], 2);
}
