//! End-to-end checks of the compiled binary: exit codes, artifact layout,
//! and byte determinism of generated data.

use std::path::Path;
use std::process::{Command, Output};

fn vbnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vbnet"))
        .args(args)
        .env_remove("VBNET_OUT_DIR")
        .output()
        .expect("binary failed to spawn")
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn no_subcommand_is_a_usage_error() {
    let out = vbnet(&[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "no usage text in:\n{err}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = vbnet(&["gen-data", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_value_exits_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = vbnet(&["gen-data", "--train-frac", "1.5", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("train_frac"), "unexpected error text:\n{err}");
}

#[test]
fn gen_data_writes_per_unit_csv_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let out = vbnet(&["gen-data", "--units", "4", "--days", "12", "--out", dir]);
    assert_ok(&out, "gen-data");
    for unit in 0..4 {
        assert!(tmp.path().join(format!("unit_{unit}.csv")).is_file());
    }
    assert!(tmp.path().join("manifest.json").is_file());
}

#[test]
fn gen_data_is_byte_deterministic() {
    let run = |dir: &Path| {
        let out = vbnet(&["gen-data", "--days", "12", "--out", dir.to_str().unwrap()]);
        assert_ok(&out, "gen-data");
        (
            std::fs::read(dir.join("unit_0.csv")).unwrap(),
            std::fs::read(dir.join("manifest.json")).unwrap(),
        )
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run(a.path()), run(b.path()));
}

/// gen-data → train → eval → identify round trip on a small dataset.
#[test]
fn train_eval_identify_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    assert_ok(
        &vbnet(&["gen-data", "--days", "12", "--out", dir]),
        "gen-data",
    );
    assert_ok(
        &vbnet(&[
            "train", "--data", dir, "--model", "vbnet", "--epochs", "2", "--patience", "2",
            "--out", dir,
        ]),
        "train",
    );
    let ckpt = tmp.path().join("vbnet.ckpt.json");
    assert!(ckpt.is_file());
    assert!(tmp.path().join("train_vbnet.json").is_file());

    let ckpt = ckpt.to_str().unwrap();
    assert_ok(
        &vbnet(&["eval", "--data", dir, "--model", "vbnet", "--ckpt", ckpt, "--out", dir]),
        "eval",
    );
    let eval: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("eval_vbnet.json")).unwrap())
            .unwrap();
    assert!(eval["rmse"].as_f64().unwrap().is_finite());

    assert_ok(
        &vbnet(&["identify", "--data", dir, "--ckpt", ckpt, "--out", dir]),
        "identify",
    );
    let params: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("vb_params.json")).unwrap())
            .unwrap();
    let rows = params.as_array().unwrap();
    assert_eq!(rows.len(), 4);
    for row in rows {
        assert!(row["C_f_J"].as_f64().unwrap() > 0.0);
        assert!(row["gamma"].as_f64().is_some());
        assert!(!row["p_loss_kw"].as_array().unwrap().is_empty());
    }
}

#[test]
fn unknown_model_name_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    assert_ok(
        &vbnet(&["gen-data", "--days", "12", "--out", dir]),
        "gen-data",
    );
    let out = vbnet(&["train", "--data", dir, "--model", "transformer", "--out", dir]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("transformer"));
}

#[test]
fn report_on_empty_dir_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = vbnet(&["report", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("no reports"), "unexpected error text:\n{err}");
}

#[test]
fn out_dir_env_var_is_honored() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_vbnet"))
        .args(["gen-data", "--days", "12"])
        .env("VBNET_OUT_DIR", tmp.path())
        .output()
        .expect("binary failed to spawn");
    assert_ok(&out, "gen-data via env");
    assert!(tmp.path().join("manifest.json").is_file());
}
