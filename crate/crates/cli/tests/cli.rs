//! End-to-end CLI tests: artifact layout, config precedence, error paths.

use std::path::Path;
use std::process::Command;

fn xicor() -> Command {
    Command::new(env!("CARGO_BIN_EXE_xicor"))
}

fn tiny_train_args(out_dir: &Path) -> Vec<String> {
    [
        "train",
        "--synth",
        "sine_mix",
        "--rows",
        "420",
        "--cols",
        "2",
        "--synth-seed",
        "5",
        "--model-dim",
        "8",
        "--n-head",
        "2",
        "--lookback",
        "16",
        "--horizon",
        "4",
        "--patch-len",
        "8",
        "--stride",
        "4",
        "--ff-dim",
        "16",
        "--epochs",
        "1",
        "--batch-size",
        "64",
        "--kernel",
        "dot_product",
        "--out-dir",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([out_dir.display().to_string()])
    .collect()
}

#[test]
fn train_writes_all_artifacts_and_eval_reads_them_back() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let output = xicor().args(tiny_train_args(&out_dir)).output().unwrap();
    assert!(
        output.status.success(),
        "train failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    for artifact in ["metrics.csv", "loss_curve.csv", "checkpoint.bin", "config.toml"] {
        assert!(out_dir.join(artifact).exists(), "missing {artifact}");
    }
    let metrics = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("split,horizon_step,mae,mse"));
    assert!(metrics.contains("valid,all"));
    assert!(metrics.contains("test,all"));
    let curve = std::fs::read_to_string(out_dir.join("loss_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 3); // header + epoch 0 + epoch 1

    let scores_dir = dir.path().join("scores");
    let output = xicor()
        .args([
            "eval",
            "--checkpoint",
            &out_dir.join("checkpoint.bin").display().to_string(),
            "--synth",
            "sine_mix",
            "--rows",
            "420",
            "--cols",
            "2",
            "--synth-seed",
            "5",
            "--split",
            "test",
            "--export-scores",
            &scores_dir.display().to_string(),
        ])
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "eval failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("test: mae"));
    assert!(scores_dir.join("scores_b0_h0.csv").exists());
    assert!(scores_dir.join("weights_b0_h1.csv").exists());
    // L x L rows of comma-separated floats; lookback 16 / patch 8 / stride 4
    // gives 4 patches.
    let scores = std::fs::read_to_string(scores_dir.join("scores_b0_h0.csv")).unwrap();
    assert_eq!(scores.lines().count(), 4);
    assert_eq!(scores.lines().next().unwrap().split(',').count(), 4);
}

#[test]
fn config_file_applies_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.toml");
    std::fs::write(
        &config_path,
        "model_dim = 16\nn_head = 4\nlookback = 16\nhorizon = 4\npatch_len = 8\nstride = 4\nff_dim = 16\nepochs = 1\nbatch_size = 64\nkernel = \"dot_product\"\n",
    )
    .unwrap();
    let out_dir = dir.path().join("run");
    let output = xicor()
        .args([
            "--config",
            &config_path.display().to_string(),
            "train",
            "--synth",
            "sine_mix",
            "--rows",
            "420",
            "--cols",
            "2",
            "--model-dim",
            "8",
            "--n-head",
            "2",
            "--out-dir",
            &out_dir.display().to_string(),
        ])
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stored = std::fs::read_to_string(out_dir.join("config.toml")).unwrap();
    // The flag overrode the file; untouched file values survive.
    assert!(stored.contains("model_dim = 8"));
    assert!(stored.contains("n_head = 2"));
    assert!(stored.contains("lookback = 16"));
}

#[test]
fn synth_is_deterministic_per_seed_and_rejects_unknown_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let status = xicor()
            .args([
                "synth",
                "--kind",
                "logistic_map",
                "--rows",
                "400",
                "--cols",
                "3",
                "--seed",
                "11",
                "--out",
                &path.display().to_string(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(
        std::fs::read_to_string(&a).unwrap(),
        std::fs::read_to_string(&b).unwrap()
    );

    let status = xicor()
        .args([
            "synth", "--kind", "wiggly", "--rows", "400", "--cols", "2", "--out", "/tmp/x.csv",
        ])
        .output()
        .unwrap();
    assert!(!status.status.success());
    assert!(String::from_utf8_lossy(&status.stderr).contains("unknown synthetic kind"));
}

#[test]
fn xi_subcommand_reports_both_directions() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    // y = x^2 on a symmetric grid: xi(x -> y) is high, xi(y -> x) near zero.
    let mut csv = String::from("date,x,y\n");
    for t in 0..41 {
        let v = (t as f64 - 20.0) / 4.0 + 1e-4 * t as f64;
        csv.push_str(&format!("{t},{v},{}\n", v * v));
    }
    std::fs::write(&data, csv).unwrap();
    let output = xicor()
        .args(["xi", "--data", &data.display().to_string(), "--x", "x", "--y", "y"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    let grab = |needle: &str| -> f64 {
        stdout
            .lines()
            .find(|l| l.starts_with(needle))
            .unwrap()
            .split('=')
            .next_back()
            .unwrap()
            .trim()
            .parse()
            .unwrap()
    };
    let forward = grab("xi(x -> y)");
    let reverse = grab("xi(y -> x)");
    assert!(forward > 0.8, "{stdout}");
    assert!(reverse < 0.5 && forward > reverse, "{stdout}");
}

#[test]
fn sweep_emits_one_row_per_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let output = xicor()
        .args([
            "sweep",
            "--dims",
            "4,8",
            "--synth",
            "sine_mix",
            "--rows",
            "420",
            "--cols",
            "2",
            "--model-dim",
            "8",
            "--lookback",
            "16",
            "--horizon",
            "4",
            "--patch-len",
            "8",
            "--stride",
            "4",
            "--ff-dim",
            "16",
            "--epochs",
            "1",
            "--batch-size",
            "64",
            "--kernel",
            "dot_product",
            "--out",
            &out.display().to_string(),
        ])
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let table = std::fs::read_to_string(&out).unwrap();
    assert!(table.starts_with("head_dim,n_head,test_mae,test_mse"));
    assert_eq!(table.lines().count(), 3);
    assert!(table.contains("\n4,2,"));
    assert!(table.contains("\n8,1,"));
}

#[test]
fn missing_data_source_is_a_usage_error() {
    let output = xicor().args(["train", "--epochs", "1"]).output().unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("--data FILE or --synth KIND"));
}
