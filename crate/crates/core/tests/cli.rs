// End-to-end runs of the `topoband` binary.

use std::process::Command;

use serde_json::Value;

fn topoband(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_topoband"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().expect("exit code"),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).expect("valid JSON")
}

#[test]
fn z2_kane_mele_both_methods() {
    let (code, out, _) = topoband(&[
        "z2",
        "--model",
        "kane_mele",
        "--params",
        "t=1,lso=0.06,lr=0.05,lv=0.1",
        "--grid",
        "24,24",
    ]);
    assert_eq!(code, 0);
    let v = json(&out);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["boundary"]["delta"], 1);
    assert_eq!(v["wilson"]["delta"], 1);
    assert_eq!(v["agree"], true);
}

#[test]
fn chern_haldane_unit_magnitude() {
    let (code, out, _) = topoband(&[
        "chern",
        "--model",
        "haldane",
        "--params",
        "t1=1,t2=0.2,phi=1.5708,M=0",
        "--grid",
        "24,24",
    ]);
    assert_eq!(code, 0);
    let v = json(&out);
    let p = v["chern"][0]["plaquette"]["value"].as_i64().unwrap();
    let c = v["chern"][0]["curvature"]["value"].as_i64().unwrap();
    assert_eq!(p, c);
    assert_eq!(p.abs(), 1);
}

#[test]
fn sweep_brackets_a_single_flip() {
    let (code, out, _) = topoband(&[
        "sweep",
        "--model",
        "kane_mele",
        "--vary",
        "lv",
        "--from",
        "0",
        "--to",
        "0.6",
        "--steps",
        "13",
        "--grid",
        "24,24",
    ]);
    assert_eq!(code, 0);
    let v = json(&out);
    assert_eq!(v["invariant"], "z2");
    assert_eq!(v["agree"], true);
    let t = v["transitions"].as_array().unwrap();
    assert_eq!(t.len(), 1);
    assert_eq!(t[0]["before"], serde_json::json!([1]));
    assert_eq!(t[0]["after"], serde_json::json!([0]));
}

#[test]
fn exit_code_matrix() {
    // success
    assert_eq!(topoband(&["gap", "--model", "ssh", "--grid", "16"]).0, 0);
    // physics: gap closes at the Dirac points, obstruction in the Chern phase
    assert_eq!(
        topoband(&["chern", "--model", "haldane", "--params", "t2=0", "--grid", "12,12"]).0,
        2
    );
    assert_eq!(
        topoband(&["gap", "--model", "haldane", "--params", "t2=0", "--grid", "12,12"]).0,
        2
    );
    assert_eq!(
        topoband(&["wannier", "--model", "haldane", "--grid", "16,16"]).0,
        2
    );
    // usage
    assert_eq!(topoband(&["frobnicate"]).0, 1);
    assert_eq!(topoband(&["gap", "--model", "nope"]).0, 1);
    assert_eq!(topoband(&["gap", "--model", "ssh", "--grid", "7"]).0, 1);
    assert_eq!(topoband(&["chern", "--model", "ssh"]).0, 1);
    assert_eq!(
        topoband(&["z2", "--model", "haldane", "--method", "plaquette"]).0,
        1
    );
    let (code, _, err) = topoband(&["gap", "--model", "haldane", "--params", "q=1"]);
    assert_eq!(code, 1);
    assert!(err.contains("params"), "{err}");
}

#[test]
fn config_file_mirrors_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"command": "chern", "model": "haldane", "params": {"M": 0.3}, "grid": [12, 12]}"#,
    )
    .unwrap();
    let (code, from_file, _) = topoband(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 0);
    let (_, from_flags, _) = topoband(&[
        "chern", "--model", "haldane", "--params", "M=0.3", "--grid", "12,12",
    ]);
    assert_eq!(from_file, from_flags);

    std::fs::write(
        &cfg,
        r#"{"command": "chern", "model": "haldane", "grdi": [12, 12]}"#,
    )
    .unwrap();
    let (code, _, err) = topoband(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("grdi"), "{err}");
}

#[test]
fn outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let path = dir.path().join(name);
        let (code, _, _) = topoband(&[
            "wannier",
            "--model",
            "ssh",
            "--grid",
            "32",
            "--gauge",
            "random",
            "--seed",
            "5",
            "--threads",
            threads,
            "--output",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        std::fs::read(path).unwrap()
    };
    assert_eq!(run("a.json", "1"), run("b.json", "4"));
}

#[test]
fn bands_and_exports() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = topoband(&["bands", "--model", "kane_mele", "--path-points", "8"]);
    assert_eq!(code, 0);
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), "s,k0,k1,E0,E1,E2,E3");
    assert_eq!(lines.count(), 3 * 8 + 1);

    let flow = dir.path().join("flow.csv");
    let (code, _, _) = topoband(&[
        "z2",
        "--model",
        "bhz",
        "--grid",
        "16,16",
        "--export",
        flow.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(std::fs::read_to_string(&flow).unwrap().starts_with("k2,"));

    let samples = dir.path().join("w.csv");
    let (code, out, _) = topoband(&[
        "wannier",
        "--model",
        "ssh",
        "--grid",
        "32",
        "--export",
        samples.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(json(&out)["wannier"]["decay"]["exponential"].as_bool().unwrap());
    assert!(std::fs::metadata(&samples).unwrap().len() > 0);
}
