//! End-to-end tests of the `cyclelane` binary: exit codes, stream
//! discipline, and byte-level reproducibility of every artifact.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cyclelane"))
}

/// Pipeline fixtures shared with the core crate's integration tests.
fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn assert_code(output: &Output, expected: i32) {
    assert_eq!(
        output.status.code(),
        Some(expected),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&output.stdout),
        stderr_of(output)
    );
}

#[test]
fn taxonomy_dump_prints_five_mains_and_thirteen_subs() {
    let output = run(&["taxonomy", "dump"]);
    assert_code(&output, 0);
    let doc: serde_json::Value =
        serde_json::from_slice(&output.stdout).expect("stdout is valid JSON");
    let mains = doc["main_classes"].as_array().expect("main_classes array");
    assert_eq!(mains.len(), 5);
    let subs: usize = mains.iter().map(|m| m["sub_classes"].as_array().unwrap().len()).sum();
    assert_eq!(subs, 13);
    assert_eq!(doc["sub_class_count"], 13);
}

#[test]
fn help_exits_zero_everywhere() {
    for args in [
        vec!["--help"],
        vec!["taxonomy", "--help"],
        vec!["ingest", "--help"],
        vec!["match", "--help"],
        vec!["label-frames", "--help"],
        vec!["train", "--help"],
        vec!["predict", "--help"],
        vec!["bench", "--help"],
        vec!["bench", "generate", "--help"],
        vec!["bench", "blackout", "--help"],
        vec!["--version"],
    ] {
        let output = run(&args);
        assert_code(&output, 0);
    }
}

#[test]
fn unknown_flag_exits_one() {
    let output = run(&["taxonomy", "dump", "--no-such-flag"]);
    assert_code(&output, 1);
}

#[test]
fn missing_subcommand_exits_one() {
    let output = run(&[]);
    assert_code(&output, 1);
}

#[test]
fn match_with_nonexistent_index_exits_one_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no-such-index.json");
    let output = run(&[
        "match",
        "--index",
        missing.to_str().unwrap(),
        "--trajectory",
        fixtures().join("trajectory.csv").to_str().unwrap(),
        "--out",
        dir.path().join("out.csv").to_str().unwrap(),
    ]);
    assert_code(&output, 1);
    assert!(
        stderr_of(&output).contains("no-such-index.json"),
        "stderr should name the missing file: {}",
        stderr_of(&output)
    );
}

#[test]
fn output_into_missing_directory_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let output = run(&[
        "ingest",
        "--network",
        fixtures().join("network.geojson").to_str().unwrap(),
        "--out",
        dir.path().join("missing/deep/index.json").to_str().unwrap(),
    ]);
    assert_code(&output, 2);
}

#[test]
fn invalid_threads_env_exits_one() {
    let output = bin()
        .args(["taxonomy", "dump"])
        .env("CYCLELANE_THREADS", "many")
        .output()
        .expect("binary runs");
    assert_code(&output, 1);
}

#[test]
fn threads_env_and_flag_are_accepted() {
    let output = bin().args(["taxonomy", "dump"]).env("CYCLELANE_THREADS", "1").output().unwrap();
    assert_code(&output, 0);
    let output = run(&["--threads", "2", "taxonomy", "dump"]);
    assert_code(&output, 0);
    let output = run(&["--threads", "0", "taxonomy", "dump"]);
    assert_code(&output, 1);
}

/// Run ingest -> match -> label-frames into `dir` and return the label bytes.
fn run_pipeline(dir: &Path) -> Vec<u8> {
    let fx = fixtures();
    let index = dir.join("index.json");
    let matches = dir.join("matches.csv");
    let labels = dir.join("labels.csv");
    let output = run(&[
        "ingest",
        "--network",
        fx.join("network.geojson").to_str().unwrap(),
        "--out",
        index.to_str().unwrap(),
    ]);
    assert_code(&output, 0);
    let output = run(&[
        "match",
        "--index",
        index.to_str().unwrap(),
        "--trajectory",
        fx.join("trajectory.csv").to_str().unwrap(),
        "--out",
        matches.to_str().unwrap(),
    ]);
    assert_code(&output, 0);
    let output = run(&[
        "label-frames",
        "--matches",
        matches.to_str().unwrap(),
        "--frames",
        fx.join("frames.csv").to_str().unwrap(),
        "--out",
        labels.to_str().unwrap(),
        "--overrides",
        fx.join("overrides.json").to_str().unwrap(),
    ]);
    assert_code(&output, 0);
    std::fs::read(labels).unwrap()
}

#[test]
fn pipeline_matches_golden_labels_and_repeats_byte_identically() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let labels_a = run_pipeline(first.path());
    let labels_b = run_pipeline(second.path());
    assert_eq!(labels_a, labels_b, "two pipeline runs disagree");
    let golden = std::fs::read(fixtures().join("golden_labels.csv")).unwrap();
    assert_eq!(labels_a, golden, "pipeline output deviates from the golden labels");
}

fn generate_args(dir: &Path) -> Vec<String> {
    vec![
        "bench".into(),
        "generate".into(),
        "--out-dir".into(),
        dir.to_str().unwrap().into(),
        "--count".into(),
        "10".into(),
        "--feature-dim".into(),
        "8".into(),
        "--latent-dim".into(),
        "8".into(),
        "--sequence-length".into(),
        "10".into(),
        "--signal-rate".into(),
        "1.0".into(),
        "--noise-std".into(),
        "0.05".into(),
    ]
}

fn train_config(dir: &Path) -> PathBuf {
    let path = dir.join("train.json");
    std::fs::write(
        &path,
        r#"{
  "model": { "feature_dim": 8, "latent_dim": 8, "encoder_hidden": 16, "heads": 2, "blocks": 1, "ff_expansion": 2 },
  "train": { "learning_rate": 0.05, "epochs": 2, "batch_size": 8, "seed": 11 }
}"#,
    )
    .unwrap();
    path
}

#[test]
fn train_and_predict_roundtrip_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let args = generate_args(&data);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_code(&run(&args), 0);
    let config = train_config(dir.path());
    let manifest = data.join("manifest.json");

    let mut checkpoints = Vec::new();
    for name in ["a.ckpt", "b.ckpt"] {
        let ckpt = dir.path().join(name);
        let output = run(&[
            "train",
            "--manifest",
            manifest.to_str().unwrap(),
            "--phase",
            "both",
            "--config",
            config.to_str().unwrap(),
            "--out",
            ckpt.to_str().unwrap(),
        ]);
        assert_code(&output, 0);
        assert!(
            stderr_of(&output).contains("phase 2 epoch 2"),
            "training progress should go to stderr"
        );
        checkpoints.push(std::fs::read(&ckpt).unwrap());
    }
    assert_eq!(checkpoints[0], checkpoints[1], "training is not reproducible");

    let pred = dir.path().join("pred.csv");
    let output = run(&[
        "predict",
        "--checkpoint",
        dir.path().join("a.ckpt").to_str().unwrap(),
        "--features",
        data.join("features.bin").to_str().unwrap(),
        "--out",
        pred.to_str().unwrap(),
    ]);
    assert_code(&output, 0);
    let text = std::fs::read_to_string(&pred).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("step,main_class,sub_class,main_prob,sub_prob"));
    assert_eq!(lines.clone().count(), 100, "10 sequences x 10 steps");
    let first = lines.next().unwrap();
    assert!(first.starts_with("0,"), "steps are numbered globally: {first}");
}

#[test]
fn train_phase_two_without_init_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let args = generate_args(&data);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_code(&run(&args), 0);
    let output = run(&[
        "train",
        "--manifest",
        data.join("manifest.json").to_str().unwrap(),
        "--phase",
        "2",
        "--out",
        dir.path().join("x.ckpt").to_str().unwrap(),
    ]);
    assert_code(&output, 1);
    assert!(stderr_of(&output).contains("--init"));
}

#[test]
fn bench_generate_rejects_unknown_class_names() {
    let dir = tempfile::tempdir().unwrap();
    let output = run(&[
        "bench",
        "generate",
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--classes",
        "painted_bike_lane,hoverboard_lane",
    ]);
    assert_code(&output, 1);
    assert!(stderr_of(&output).contains("hoverboard_lane"));
}

#[test]
fn bench_blackout_writes_22_line_csv_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let args = generate_args(&data);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_code(&run(&args), 0);
    let config = train_config(dir.path());
    let ckpt = dir.path().join("m.ckpt");
    let manifest = data.join("manifest.json");
    assert_code(
        &run(&[
            "train",
            "--manifest",
            manifest.to_str().unwrap(),
            "--phase",
            "1",
            "--config",
            config.to_str().unwrap(),
            "--out",
            ckpt.to_str().unwrap(),
        ]),
        0,
    );

    let mut curves = Vec::new();
    for name in ["c1.csv", "c2.csv"] {
        let out = dir.path().join(name);
        let output = run(&[
            "bench",
            "blackout",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--manifest",
            manifest.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--protocol",
            "no_temporal",
            "--passes",
            "2",
            "--seed",
            "3",
        ]);
        assert_code(&output, 0);
        curves.push(std::fs::read_to_string(&out).unwrap());
    }
    assert_eq!(curves[0], curves[1], "blackout sweep is not reproducible");
    let lines: Vec<&str> = curves[0].lines().collect();
    assert_eq!(lines.len(), 22, "header plus 21 probabilities");
    assert_eq!(lines[0], "p,mean,min,max");
    assert!(lines[1].starts_with("0.00,"));
    assert!(lines[21].starts_with("1.00,"));
}

#[test]
fn bench_evaluate_writes_report_to_stdout_by_default() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let args = generate_args(&data);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_code(&run(&args), 0);
    let config = train_config(dir.path());
    let ckpt = dir.path().join("m.ckpt");
    let manifest = data.join("manifest.json");
    assert_code(
        &run(&[
            "train",
            "--manifest",
            manifest.to_str().unwrap(),
            "--phase",
            "1",
            "--config",
            config.to_str().unwrap(),
            "--out",
            ckpt.to_str().unwrap(),
        ]),
        0,
    );
    let output = run(&[
        "bench",
        "evaluate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--protocol",
        "no_temporal",
    ]);
    assert_code(&output, 0);
    let report: serde_json::Value =
        serde_json::from_slice(&output.stdout).expect("stdout is a JSON report");
    assert_eq!(report["protocol"], "no_temporal");
    assert_eq!(report["labeled_steps"], 100);
    assert!(report["sub_micro_accuracy"].as_f64().unwrap() >= 0.0);

    let ranks = dir.path().join("ranks.csv");
    let output = run(&[
        "bench",
        "rank",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        ranks.to_str().unwrap(),
        "--protocol",
        "no_temporal",
    ]);
    assert_code(&output, 0);
    let text = std::fs::read_to_string(&ranks).unwrap();
    assert!(text.starts_with("video_id,accuracy\nsynthetic,"), "worklist: {text}");
}
