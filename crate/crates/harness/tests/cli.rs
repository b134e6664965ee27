use std::path::Path;
use std::process::{Command, Output};

use tfish_harness::experiment::{read_activation, read_rows};

fn tfish(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tfish")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = tfish(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = d.join("cfg.json");
    std::fs::write(
        &config,
        r#"{
  "dataset": {"num_classes": 3, "clips_per_class": 4, "duration_s": 1.0},
  "model": {"embed_dim": 16, "num_blocks": 3, "num_heads": 2, "mlp_hidden": 16, "num_classes": 3}
}"#,
    )
    .unwrap();
    let (data, model) = (d.join("data"), d.join("m0.tfsh"));
    ok(&["gen-dataset", "--config", s(&config), "--out", s(&data)]);
    ok(&[
        "train-head", "--dataset", s(&data), "--model-out", s(&model), "--seed", "0",
        "--ridge-lambda", "0.1", "--config", s(&config),
    ]);

    let results = d.join("results.csv");
    ok(&[
        "eval", "--model", s(&model), "--dataset", s(&data), "--snr", "-5,-15", "--order", "1,4",
        "--cutoff-hz", "1000", "--ending-block", "1", "--single-bin", "--out", s(&results),
    ]);
    let rows = read_rows(&results).unwrap();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r.n_eval == 3 && r.cutoff_hz == Some(1000.0)));

    let sweep = d.join("sweep.csv");
    ok(&[
        "sweep-ending-block", "--model", s(&model), "--dataset", s(&data), "--snr", "-10",
        "--order", "2", "--out", s(&sweep),
    ]);
    let rows = read_rows(&sweep).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(!rows[0].adapted && rows[1..].iter().all(|r| r.adapted));

    let probe = d.join("probe.csv");
    ok(&["probe", "--model", s(&model), "--signal", "square", "--out", s(&probe)]);
    let text = std::fs::read_to_string(&probe).unwrap();
    assert_eq!(text.lines().next(), Some("block,time_diff,freq_diff,kurtosis,input_label"));
    assert_eq!(text.lines().count(), 1 + 1 + 3);

    let clip = std::fs::read_dir(data.join("clips"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|x| x == "wav"))
        .unwrap();
    let dumps = d.join("dumps");
    ok(&[
        "dump-activations", "--model", s(&model), "--clip", s(&clip), "--blocks", "0,2",
        "--out", s(&dumps),
    ]);
    let t = read_activation(dumps.join("block_02.tfsh")).unwrap();
    assert_eq!(t.dims(), vec![1, 16, 8, 13]);
}

#[test]
fn rejected_input_exits_nonzero_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = tfish(&["eval", "--model", "missing.tfsh", "--dataset", s(dir.path()), "--out", "x.csv"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.lines().filter(|l| l.starts_with("error:")).count(), 1);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"dataset": {"num_classes": 1}}"#).unwrap();
    assert!(!tfish(&["gen-dataset", "--config", s(&bad), "--out", s(dir.path())]).status.success());
    let both = tfish(&["eval", "--model", "m", "--dataset", "d", "--out", "o", "--band", "--single-bin"]);
    assert!(!both.status.success());
}
