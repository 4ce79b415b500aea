//! End-to-end tests of the `net3` binary: exit codes, JSON metrics on
//! stdout, artifact layout, and run-to-run determinism.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn net3(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_net3"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn json_line(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}, stderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout.clone()).unwrap();
    let line = stdout.lines().last().expect("one JSON line");
    serde_json::from_str(line).expect("stdout is a JSON line")
}

#[test]
fn params_and_rho_bound_report_the_table_values() {
    let tmp = tempfile::tempdir().unwrap();
    let v = json_line(&net3(&["params", "54,4", "0.8", "8", "8"], tmp.path()));
    assert_eq!(v["tlstm_params"], 18_552);
    assert_eq!(v["mlstm_params"], 117_504);
    assert_eq!(v["reduction_percent"], 84.21);

    let v = json_line(&net3(&["rho-bound", "1000,2", "8", "8"], tmp.path()));
    let rho_max = v["rho_max"].as_f64().unwrap();
    assert!((rho_max - 0.31).abs() < 0.005);
}

#[test]
fn params_warns_above_the_bound() {
    let tmp = tempfile::tempdir().unwrap();
    // rho far above rho_max: reduction is negative and flagged
    let v = json_line(&net3(&["params", "8,8", "3.0", "2", "2"], tmp.path()));
    assert!(v["warning"].as_str().is_some(), "expected a warning field");
}

#[test]
fn synth_train_predict_recover_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let v = json_line(&net3(
        &[
            "synth",
            "--out",
            data.to_str().unwrap(),
            "--dims",
            "4,3",
            "--core-dims",
            "2,2",
            "--t",
            "80",
            "--noise",
            "0.05",
            "--seed",
            "5",
        ],
        tmp.path(),
    ));
    assert_eq!(v["shape"], serde_json::json!([4, 3, 80]));
    assert!(data.join("manifest").exists());
    assert!(data.join("values.bin").exists());

    let run = tmp.path().join("run");
    let v = json_line(&net3(
        &[
            "train",
            "--data",
            data.to_str().unwrap(),
            "--out",
            run.to_str().unwrap(),
            "--epochs",
            "3",
            "--d",
            "4",
            "--d-out",
            "4",
            "--rho",
            "0.6",
            "--activation",
            "tanh",
            "--seed",
            "2",
        ],
        tmp.path(),
    ));
    assert!(v["final_train_loss"].as_f64().unwrap().is_finite());
    let ckpt = run.join("checkpoint.net3");
    assert!(ckpt.exists());
    assert!(run.join("train_log.jsonl").exists());

    let v = json_line(&net3(
        &[
            "eval",
            "--data",
            data.to_str().unwrap(),
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--out",
            run.to_str().unwrap(),
        ],
        tmp.path(),
    ));
    assert!(v["rmse_normalized"].as_f64().unwrap().is_finite());
    assert!(run.join("one_step.csv").exists());

    let v = json_line(&net3(
        &[
            "predict",
            "--data",
            data.to_str().unwrap(),
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--out",
            run.to_str().unwrap(),
        ],
        tmp.path(),
    ));
    // horizon defaults to the whole future split; every observed entry in
    // the split gets a CSV row
    let horizon = v["horizon"].as_u64().unwrap();
    assert_eq!(horizon, 8); // 10% of 80
    assert_eq!(v["entries"].as_u64().unwrap(), 8 * 12);
    let csv = std::fs::read_to_string(run.join("predictions.csv")).unwrap();
    assert_eq!(csv.lines().count() as u64, 8 * 12 + 1); // header + rows
    assert!(csv.lines().next().unwrap().starts_with("idx_1,idx_2,t,"));

    let rec = tmp.path().join("rec");
    let v = json_line(&net3(
        &[
            "recover",
            "--data",
            data.to_str().unwrap(),
            "--out",
            rec.to_str().unwrap(),
            "--missing-fraction",
            "0.1",
            "--epochs",
            "3",
            "--d",
            "4",
            "--d-out",
            "4",
            "--rho",
            "0.6",
            "--activation",
            "tanh",
            "--seed",
            "2",
        ],
        tmp.path(),
    ));
    assert!(v["rmse_normalized"].as_f64().unwrap().is_finite());
    assert_eq!(v["trained"], true);
    assert!(rec.join("recovered.csv").exists());
}

#[test]
fn recover_reuses_a_checkpoint_without_training() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    net3(
        &[
            "synth",
            "--out",
            data.to_str().unwrap(),
            "--dims",
            "4,3",
            "--core-dims",
            "2,2",
            "--t",
            "80",
            "--seed",
            "5",
        ],
        tmp.path(),
    );
    let run = tmp.path().join("run");
    let o = net3(
        &[
            "train",
            "--data",
            data.to_str().unwrap(),
            "--out",
            run.to_str().unwrap(),
            "--epochs",
            "3",
            "--d",
            "4",
            "--d-out",
            "4",
            "--rho",
            "0.6",
            "--seed",
            "2",
        ],
        tmp.path(),
    );
    assert!(o.status.success());
    let ckpt = run.join("checkpoint.net3");
    let rec = tmp.path().join("rec");
    let v = json_line(&net3(
        &[
            "recover",
            "--data",
            data.to_str().unwrap(),
            "--out",
            rec.to_str().unwrap(),
            "--missing-fraction",
            "0.1",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--seed",
            "2",
        ],
        tmp.path(),
    ));
    assert_eq!(v["trained"], false);
    assert!(v["rmse_normalized"].as_f64().unwrap().is_finite());
    // no fresh checkpoint is written when reusing one
    assert!(!rec.join("checkpoint.net3").exists());
}

#[test]
fn binary_runs_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    net3(
        &[
            "synth",
            "--out",
            data.to_str().unwrap(),
            "--dims",
            "3,2",
            "--core-dims",
            "2,1",
            "--t",
            "40",
            "--seed",
            "9",
        ],
        tmp.path(),
    );
    let train = |name: &str| {
        let out = tmp.path().join(name);
        let o = net3(
            &[
                "train",
                "--data",
                data.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--epochs",
                "2",
                "--d",
                "3",
                "--d-out",
                "3",
                "--rho",
                "0.7",
                "--seed",
                "4",
            ],
            tmp.path(),
        );
        assert!(o.status.success());
        std::fs::read(out.join("checkpoint.net3")).unwrap()
    };
    assert_eq!(train("a"), train("b"));
}

#[test]
fn config_file_merges_under_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    net3(
        &[
            "synth",
            "--out",
            data.to_str().unwrap(),
            "--dims",
            "3,2",
            "--core-dims",
            "2,1",
            "--t",
            "40",
            "--seed",
            "9",
        ],
        tmp.path(),
    );
    let cfg_path = tmp.path().join("run.conf");
    std::fs::write(&cfg_path, "epochs=5\nd=3\nd_out=3\nrho=0.7\nseed=4\n").unwrap();
    let out = tmp.path().join("run");
    let v = json_line(&net3(
        &[
            "train",
            "--data",
            data.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--config",
            cfg_path.to_str().unwrap(),
            "--epochs",
            "2", // flag beats the config file
        ],
        tmp.path(),
    ));
    assert_eq!(v["epochs"], 2);
    assert_eq!(v["seed"], 4); // from the file
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let tmp = tempfile::tempdir().unwrap();
    // missing dataset
    let o = net3(
        &["train", "--data", "/nonexistent-dataset", "--out", "x"],
        tmp.path(),
    );
    assert!(!o.status.success());
    assert!(!o.stderr.is_empty());

    // degenerate recovery split (0% masking)
    let data = tmp.path().join("data");
    net3(
        &[
            "synth",
            "--out",
            data.to_str().unwrap(),
            "--dims",
            "3,2",
            "--core-dims",
            "2,1",
            "--t",
            "40",
            "--seed",
            "9",
        ],
        tmp.path(),
    );
    let o = net3(
        &[
            "recover",
            "--data",
            data.to_str().unwrap(),
            "--out",
            tmp.path().join("r").to_str().unwrap(),
            "--missing-fraction",
            "0.0",
        ],
        tmp.path(),
    );
    assert!(!o.status.success());
    let msg = String::from_utf8_lossy(&o.stderr);
    assert!(msg.contains("fraction"), "stderr: {msg}");

    // bad variant name
    let o = net3(
        &[
            "train",
            "--data",
            data.to_str().unwrap(),
            "--out",
            tmp.path().join("v").to_str().unwrap(),
            "--variant",
            "bogus",
        ],
        tmp.path(),
    );
    assert!(!o.status.success());
}
