//! End-to-end tests driving the compiled `fspike` binary: exit codes,
//! machine-parseable error records, artifact layout, and reproducibility
//! from the echoed configuration.

use serde_json::Value;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fspike"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

/// Run expecting success; parse the one-line JSON summary from stdout.
fn run_ok(args: &[&str]) -> Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON summary")
}

/// Run expecting failure with the given exit code; parse the JSON error
/// record from stderr.
fn run_err(args: &[&str], expected_code: i32) -> Value {
    let out = run(args);
    assert_eq!(
        out.status.code(),
        Some(expected_code),
        "command {args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    let stderr = String::from_utf8_lossy(&out.stderr);
    let record = stderr
        .lines()
        .rev()
        .find(|l| l.starts_with('{'))
        .unwrap_or_else(|| panic!("no JSON error record in stderr: {stderr}"));
    serde_json::from_str(record).expect("stderr carries a JSON error record")
}

fn bundled_config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
        .display()
        .to_string()
}

/// Minimal fast training config on generated digits.
fn tiny_config(data_dir: &Path, out_dir: &Path, alpha: f64) -> String {
    format!(
        r#"
[network]
dims = [784, 16, 10]
alpha = {alpha}
tau_alpha = 2.0
theta = 1.0
init_seed = 0

[train]
epochs = 1
batch_size = 16
seed = 0
t_steps = 4

[data]
kind = "synthetic"
dir = "{}"
train_count = 64
test_count = 32

[output]
dir = "{}"
"#,
        data_dir.display(),
        out_dir.display()
    )
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn solve_fde_euler_decay_beats_the_documented_error_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sol.csv");
    let summary = run_ok(&[
        "solve-fde",
        "--alpha",
        "1.0",
        "--method",
        "euler",
        "--steps",
        "1000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(summary["max_abs_error"].as_f64().unwrap() < 1e-3);

    let csv = fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,y,reference,abs_error");
    let last = lines.last().unwrap();
    let err: f64 = last.rsplit(',').next().unwrap().parse().unwrap();
    assert!(err < 1e-3, "final-row abs error {err}");
}

#[test]
fn exit_codes_distinguish_usage_numerical_and_io_failures() {
    // Usage: unknown flag.
    let out = run(&["solve-fde", "--alpha", "1.0", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(1));

    // Usage: domain-invalid argument, with an error record.
    let rec = run_err(&["solve-fde", "--alpha", "2.0"], 1);
    assert_eq!(rec["error"]["kind"], "invalid_argument");
    assert_eq!(rec["error"]["exit_code"], 1);

    // Numerical: unreachable gradcheck threshold.
    let rec = run_err(
        &[
            "gradcheck",
            "--config",
            &bundled_config("gradcheck_toy.toml"),
            "--threshold",
            "1e-15",
        ],
        2,
    );
    assert_eq!(rec["error"]["kind"], "precision");

    // I/O: missing file.
    let rec = run_err(&["plot", "--input", "/definitely/not/here.csv"], 3);
    assert_eq!(rec["error"]["kind"], "io");
    assert!(rec["error"]["message"]
        .as_str()
        .unwrap()
        .contains("/definitely/not/here.csv"));
}

#[test]
fn config_errors_name_the_offending_field() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tiny_config(tmp.path(), tmp.path(), 0.8).replace("epochs = 1", "epochz = 1");
    let path = write_config(tmp.path(), &bad);
    let rec = run_err(&["train", "--config", &path], 1);
    assert_eq!(rec["error"]["kind"], "config");
    assert!(
        rec["error"]["message"].as_str().unwrap().contains("epochz"),
        "{rec}"
    );
}

#[test]
fn gradcheck_on_the_bundled_toy_config_passes() {
    let summary = run_ok(&["gradcheck", "--config", &bundled_config("gradcheck_toy.toml")]);
    assert!(summary["max_rel_error"].as_f64().unwrap() < 1e-3);
    assert_eq!(summary["params_checked"].as_u64().unwrap(), 48);
}

#[test]
fn train_writes_the_full_artifact_set() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("run");
    let cfg = write_config(
        tmp.path(),
        &tiny_config(&tmp.path().join("data"), &out_dir, 0.8),
    );
    let summary = run_ok(&["train", "--config", &cfg]);
    assert_eq!(summary["epochs"].as_u64().unwrap(), 1);
    for artifact in [
        "config.effective.toml",
        "metrics.jsonl",
        "metrics.csv",
        "model.ckpt",
        "confusion.csv",
        "summary.json",
    ] {
        assert!(out_dir.join(artifact).exists(), "missing {artifact}");
    }
    // Line-delimited metrics parse record by record.
    let jsonl = fs::read_to_string(out_dir.join("metrics.jsonl")).unwrap();
    for line in jsonl.lines() {
        let rec: Value = serde_json::from_str(line).unwrap();
        assert!(rec["train_loss"].as_f64().unwrap().is_finite());
    }
    // Confusion matrix rows sum to the test-set size.
    let confusion = fs::read_to_string(out_dir.join("confusion.csv")).unwrap();
    let total: u64 = confusion
        .lines()
        .skip(1)
        .flat_map(|l| l.split(',').skip(1))
        .map(|v| v.parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 32);
}

#[test]
fn rerunning_from_the_echoed_config_reproduces_the_checkpoint_bitwise() {
    let tmp = tempfile::tempdir().unwrap();
    let out1 = tmp.path().join("run1");
    let cfg = write_config(
        tmp.path(),
        &tiny_config(&tmp.path().join("data"), &out1, 0.8),
    );
    run_ok(&["train", "--config", &cfg]);

    let echoed = out1.join("config.effective.toml");
    let out2 = tmp.path().join("run2");
    run_ok(&[
        "train",
        "--config",
        echoed.to_str().unwrap(),
        "--out-dir",
        out2.to_str().unwrap(),
    ]);

    let a = fs::read(out1.join("model.ckpt")).unwrap();
    let b = fs::read(out2.join("model.ckpt")).unwrap();
    assert_eq!(a, b, "checkpoints differ between identically configured runs");
}

#[test]
fn robustness_at_level_zero_equals_plain_eval_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("run");
    let cfg = write_config(
        tmp.path(),
        &tiny_config(&tmp.path().join("data"), &out_dir, 0.8),
    );
    run_ok(&["train", "--config", &cfg]);
    let ckpt = out_dir.join("model.ckpt");

    let eval_dir = tmp.path().join("eval");
    let eval = run_ok(&[
        "eval",
        "--config",
        &cfg,
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--out-dir",
        eval_dir.to_str().unwrap(),
    ]);

    let rob_dir = tmp.path().join("rob");
    let rob = run_ok(&[
        "robustness",
        "--config",
        &cfg,
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--corruption",
        "gaussian",
        "--levels",
        "0",
        "--out-dir",
        rob_dir.to_str().unwrap(),
    ]);

    let plain = eval["accuracy"].as_f64().unwrap();
    let sweep = rob["sweep"].as_array().unwrap();
    assert_eq!(sweep.len(), 1);
    assert_eq!(
        sweep[0]["accuracy"].as_f64().unwrap(),
        plain,
        "zero-level corruption must be the identity"
    );
}

#[test]
fn energy_reports_per_layer_and_total_joules() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("run");
    let cfg = write_config(
        tmp.path(),
        &tiny_config(&tmp.path().join("data"), &out_dir, 0.8),
    );
    run_ok(&["train", "--config", &cfg]);
    let ckpt = out_dir.join("model.ckpt");
    let csv_path = tmp.path().join("energy.csv");

    let summary = run_ok(&[
        "energy",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--rates",
        "0.05,0.1",
        "--timesteps",
        "8",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    let per_layer = summary["per_layer_joules"].as_array().unwrap();
    assert_eq!(per_layer.len(), 2);
    let total: f64 = per_layer.iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((summary["total_joules"].as_f64().unwrap() - total).abs() < 1e-18);

    let csv = fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("layer,flops,firing_rate,joules\n"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn simulate_neuron_emits_headers_and_spike_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("neuron.csv");
    let summary = run_ok(&[
        "simulate-neuron",
        "--alpha",
        "0.6",
        "--drive",
        "constant",
        "--level",
        "2.0",
        "--out",
        out.to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,input,membrane,spike");
    let spike_rows = lines.filter(|l| l.ends_with(",1")).count();
    assert_eq!(
        spike_rows as u64,
        summary["spike_count"].as_u64().unwrap(),
        "summary spike count must match the CSV"
    );
    assert!(spike_rows > 0, "a suprathreshold drive must spike");
}

#[test]
fn noisy_drive_is_reproducible_under_a_fixed_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let out_a = tmp.path().join("a.csv");
    let out_b = tmp.path().join("b.csv");
    for out in [&out_a, &out_b] {
        run_ok(&[
            "simulate-neuron",
            "--alpha",
            "0.8",
            "--drive",
            "noisy",
            "--level",
            "1.2",
            "--noise-seed",
            "9",
            "--out",
            out.to_str().unwrap(),
        ]);
    }
    assert_eq!(
        fs::read(&out_a).unwrap(),
        fs::read(&out_b).unwrap(),
        "same seed, same trace"
    );
}

#[test]
fn plot_renders_training_curves_to_svg() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("curve.csv");
    fs::write(&csv, "epoch,loss,accuracy\n1,2.3,0.1\n2,1.9,0.3\n3,1.2,0.6\n").unwrap();
    let svg_path = tmp.path().join("curve.svg");
    let summary = run_ok(&[
        "plot",
        "--input",
        csv.to_str().unwrap(),
        "--out",
        svg_path.to_str().unwrap(),
    ]);
    assert_eq!(summary["rows"].as_u64().unwrap(), 3);
    assert_eq!(summary["series"].as_u64().unwrap(), 2);
    let svg = fs::read_to_string(&svg_path).unwrap();
    assert!(
        svg.starts_with("<?xml version=\"1.0\""),
        "must be a standalone XML document"
    );
    assert!(svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<polyline").count(), 2);
}

#[test]
fn help_and_version_exit_zero() {
    assert!(run(&["--help"]).status.success());
    assert!(run(&["--version"]).status.success());
    assert!(run(&["train", "--help"]).status.success());
}

#[test]
fn thread_cap_env_var_is_accepted() {
    let out = bin()
        .env("FSPIKE_THREADS", "1")
        .args(["solve-fde", "--alpha", "0.5", "--steps", "50", "--out"])
        .arg(std::env::temp_dir().join("fspike_threads_probe.csv"))
        .output()
        .expect("binary runs");
    assert!(out.status.success());
}
