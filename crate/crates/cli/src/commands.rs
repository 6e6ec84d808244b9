//! Subcommand implementations: thin wrappers over the library.

use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};

use xicor_core::attention::AttentionKernel;
use xicor_core::forecast::{
    bench_runtime, evaluate_scaled, load_checkpoint, load_csv, save_checkpoint, sweep_head_dim,
    synth_dataset, time_soft_rank, train as train_model, HarnessConfig, SeriesDataset, Split,
    SynthKind, TrainResult,
};
use xicor_core::stats::{correlation_matrix, pearson, xi_exact, CorrelationKind, SamplePair};
use xicor_core::{RankVector, Tensor};

use crate::DataSource;

fn parse_values(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .with_context(|| format!("'{tok}' is not a number"))
        })
        .collect()
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .filter(|tok| !tok.trim().is_empty())
        .map(|tok| {
            tok.trim()
                .parse::<T>()
                .map_err(|e| anyhow::anyhow!("bad {what} '{tok}': {e}"))
        })
        .collect()
}

fn load_source(source: &DataSource, config: &HarnessConfig) -> Result<SeriesDataset> {
    match (&source.data, &source.synth) {
        (Some(path), None) => Ok(load_csv(path, config.split_spec())?),
        (None, Some(kind)) => Ok(synth_dataset(
            kind.parse()?,
            source.rows,
            source.cols,
            source.synth_seed,
        )?),
        (None, None) => bail!("provide --data FILE or --synth KIND"),
        (Some(_), Some(_)) => bail!("--data and --synth are mutually exclusive"),
    }
}

fn resolve_column(ds: &SeriesDataset, key: &str) -> Result<usize> {
    if let Some(idx) = ds.variable_names.iter().position(|n| n == key) {
        return Ok(idx);
    }
    if let Ok(idx) = key.parse::<usize>() {
        if idx < ds.n_vars() {
            return Ok(idx);
        }
    }
    bail!(
        "unknown column '{key}'; available: {}",
        ds.variable_names.join(", ")
    )
}

pub fn synth(kind: &str, rows: usize, cols: usize, seed: u64, out: &Path) -> Result<i32> {
    let kind: SynthKind = kind.parse()?;
    let ds = synth_dataset(kind, rows, cols, seed)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    ds.write_csv(out)?;
    println!("wrote {} rows x {} variables ({kind}) to {}", rows, cols, out.display());
    Ok(0)
}

pub fn xi(data: &Path, x_key: &str, y_key: &str) -> Result<i32> {
    // Splits are irrelevant here; the statistics use the whole series.
    let ds = load_csv(data, xicor_core::forecast::SplitSpec::Fractions(0.6, 0.2))?;
    let xi_col = resolve_column(&ds, x_key)?;
    let yi_col = resolve_column(&ds, y_key)?;
    let x = ds.raw_column(xi_col);
    let y = ds.raw_column(yi_col);
    let pair_xy = SamplePair::new(&x, &y)?;
    let pair_yx = SamplePair::new(&y, &x)?;
    println!("n = {}", x.len());
    println!("xi({x_key} -> {y_key})      = {:+.6}", xi_exact(&pair_xy)?);
    println!("xi({y_key} -> {x_key})      = {:+.6}", xi_exact(&pair_yx)?);
    println!("pearson({x_key}, {y_key})   = {:+.6}", pearson(&pair_xy)?);
    Ok(0)
}

pub fn corr_matrix(data: &Path, kind: &str, out: Option<&Path>) -> Result<i32> {
    let kind = match kind {
        "pearson" => CorrelationKind::Pearson,
        "xi" => CorrelationKind::Xi,
        other => bail!("unknown correlation kind '{other}' (pearson | xi)"),
    };
    let ds = load_csv(data, xicor_core::forecast::SplitSpec::Fractions(0.6, 0.2))?;
    let columns: Vec<Vec<f64>> = (0..ds.n_vars()).map(|c| ds.raw_column(c)).collect();
    let matrix = correlation_matrix(&columns, &ds.variable_names, kind)?;
    if !matrix.constant_columns.is_empty() {
        eprintln!(
            "note: constant columns {:?} reported as NaN",
            matrix
                .constant_columns
                .iter()
                .map(|&c| ds.variable_names[c].as_str())
                .collect::<Vec<_>>()
        );
    }
    match out {
        Some(path) => {
            let file = std::fs::File::create(path)?;
            matrix.write_csv(file)?;
            println!("wrote {} matrix ({0}x{0} variables: {1}) to {2}", kind, matrix.size(), path.display());
        }
        None => {
            let mut buf = Vec::new();
            matrix.write_csv(&mut buf)?;
            print!("{}", String::from_utf8_lossy(&buf));
        }
    }
    Ok(0)
}

pub fn sort(values: &str, tau: f64, matrix: bool) -> Result<i32> {
    let q = parse_values(values)?;
    let sp = xicor_core::soft_sort(&Tensor::vector(&q), tau)?;
    let ascending = xicor_core::argsort_ascending(&q);
    println!("descending argsort (zero-based): {:?}", sp.hard.indices());
    println!("ascending argsort  (zero-based): {:?}", ascending.indices());
    println!("sorted descending: {:?}", sp.hard.apply(&q));
    if matrix {
        println!("soft permutation matrix (tau = {tau}):");
        let n = q.len();
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format!("{:.6}", sp.soft.at(i, j))).collect();
            println!("  [{}]", row.join(", "));
        }
    }
    Ok(0)
}

pub fn rank(values: &str, epsilon: f64) -> Result<i32> {
    let k = parse_values(values)?;
    let soft = RankVector::soft(&k, epsilon)?;
    println!("input: {k:?}");
    println!("soft descending ranks (epsilon = {epsilon}): {:?}", soft.values);
    println!(
        "exact descending ranks: {:?}",
        xicor_core::exact_ranks_descending(&k)
    );
    println!(
        "exact ascending ranks:  {:?}",
        xicor_core::exact_ranks_ascending(&k)
    );
    Ok(0)
}

pub fn grad_check(seed: u64) -> Result<i32> {
    let report = xicor_core::gradcheck::full_suite(seed)?;
    print!("{report}");
    if report.all_passed() {
        println!("gradient check: all {} cases passed", report.cases.len());
        Ok(0)
    } else {
        let failed = report.cases.iter().filter(|c| !c.passed()).count();
        eprintln!("gradient check: {failed} case(s) FAILED");
        Ok(1)
    }
}

fn write_metrics_csv(path: &Path, reports: &[xicor_core::forecast::EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["split", "horizon_step", "mae", "mse", "n_windows", "fingerprint"])?;
    for report in reports {
        w.write_record([
            report.split.to_string(),
            "all".into(),
            format!("{:.9}", report.mae),
            format!("{:.9}", report.mse),
            report.n_windows.to_string(),
            report.config_fingerprint.clone(),
        ])?;
        for (step, (mae, mse)) in report.per_horizon.iter().enumerate() {
            w.write_record([
                report.split.to_string(),
                (step + 1).to_string(),
                format!("{mae:.9}"),
                format!("{mse:.9}"),
                report.n_windows.to_string(),
                report.config_fingerprint.clone(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_loss_curve_csv(path: &Path, result: &TrainResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "valid_mse", "valid_mae"])?;
    for point in &result.curve {
        let train_loss = if point.train_loss.is_nan() {
            String::new()
        } else {
            format!("{:.9}", point.train_loss)
        };
        w.write_record([
            point.epoch.to_string(),
            train_loss,
            format!("{:.9}", point.valid_mse),
            format!("{:.9}", point.valid_mae),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn train(config: &HarnessConfig, source: &DataSource, out_dir: &Path) -> Result<i32> {
    let dataset = load_source(source, config)?;
    let model_cfg = config.model_config()?;
    let train_cfg = config.train_config()?;
    std::fs::create_dir_all(out_dir)?;

    println!("config fingerprint: {}", config.fingerprint());
    println!("model: {}", model_cfg.describe());
    println!(
        "data: {} rows x {} vars (train/valid/test = {}/{}/{})",
        dataset.t_total(),
        dataset.n_vars(),
        dataset.train_end,
        dataset.valid_end - dataset.train_end,
        dataset.t_total() - dataset.valid_end
    );

    let model = xicor_core::forecast::ForecastModel::init(model_cfg, train_cfg.seed);
    println!("parameters: {}", model.params.total_elements());
    let result = train_model(model, &dataset, &train_cfg)?;
    for point in &result.curve {
        if point.train_loss.is_nan() {
            println!("epoch {:>3}  valid mse {:.6}", point.epoch, point.valid_mse);
        } else {
            println!(
                "epoch {:>3}  train loss {:.6}  valid mse {:.6}",
                point.epoch, point.train_loss, point.valid_mse
            );
        }
    }
    println!(
        "best epoch {} ({:.1}s total)",
        result.best_epoch, result.wall_seconds
    );

    let valid = evaluate_scaled(&result.model, &dataset, Split::Valid, false)?;
    let test = evaluate_scaled(&result.model, &dataset, Split::Test, false)?;
    println!("valid: mae {:.6}  mse {:.6}", valid.mae, valid.mse);
    println!("test:  mae {:.6}  mse {:.6}", test.mae, test.mse);

    write_metrics_csv(&out_dir.join("metrics.csv"), &[valid, test])?;
    write_loss_curve_csv(&out_dir.join("loss_curve.csv"), &result)?;
    save_checkpoint(&out_dir.join("checkpoint.bin"), &result.model, config)?;
    std::fs::write(out_dir.join("config.toml"), config.to_toml_string())?;
    println!("artifacts in {}", out_dir.display());
    Ok(0)
}

pub fn eval(
    checkpoint: &Path,
    source: &DataSource,
    split: &str,
    raw: bool,
    export_scores: Option<&Path>,
) -> Result<i32> {
    let (model, config) = load_checkpoint(checkpoint)?;
    let dataset = load_source(source, &config)?;
    let split: Split = split.parse()?;
    let report = evaluate_scaled(&model, &dataset, split, raw)?;
    println!(
        "{split}: mae {:.6}  mse {:.6}  ({} windows, {} scale, fingerprint {})",
        report.mae,
        report.mse,
        report.n_windows,
        if raw { "raw" } else { "normalized" },
        report.config_fingerprint
    );
    for (step, (mae, mse)) in report.per_horizon.iter().enumerate() {
        println!("  h={:<3} mae {mae:.6}  mse {mse:.6}", step + 1);
    }

    if let Some(dir) = export_scores {
        std::fs::create_dir_all(dir)?;
        let range = dataset.split_range(split);
        let window: Vec<f64> = (range.start..range.start + model.cfg.patch.lookback)
            .map(|t| dataset.normalized(t, 0))
            .collect();
        let diags = model.attention_diagnostics(&window)?;
        for (block, diag) in diags.iter().enumerate() {
            for (head, (scores, weights)) in diag.scores.iter().zip(&diag.weights).enumerate() {
                write_matrix_csv(&dir.join(format!("scores_b{block}_h{head}.csv")), scores)?;
                write_matrix_csv(&dir.join(format!("weights_b{block}_h{head}.csv")), weights)?;
            }
        }
        println!("score/weight matrices in {}", dir.display());
    }
    Ok(0)
}

fn write_matrix_csv(path: &Path, m: &Tensor) -> Result<()> {
    let (rows, cols) = (m.shape()[0], m.shape()[1]);
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    for i in 0..rows {
        let row: Vec<String> = (0..cols).map(|j| format!("{:.9}", m.at(i, j))).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn sweep(config: &HarnessConfig, dims: &str, source: &DataSource, out: Option<&Path>) -> Result<i32> {
    let dims: Vec<usize> = parse_list(dims, "head dimension")?;
    let dataset = load_source(source, config)?;
    let rows = sweep_head_dim(&dims, &config.model_config()?, &dataset, &config.train_config()?)?;
    let mut table = String::from("head_dim,n_head,test_mae,test_mse,best_epoch,train_seconds\n");
    for row in &rows {
        table.push_str(&format!(
            "{},{},{:.9},{:.9},{},{:.3}\n",
            row.head_dim,
            row.n_head,
            row.report.mae,
            row.report.mse,
            row.best_epoch,
            row.train_seconds
        ));
    }
    print!("{table}");
    if let Some(path) = out {
        std::fs::write(path, table)?;
        println!("wrote {}", path.display());
    }
    Ok(0)
}

pub fn bench(
    config: &HarnessConfig,
    lookbacks: &str,
    kernels: &str,
    softrank_sizes: &str,
    batch_size: usize,
    out: Option<&Path>,
) -> Result<i32> {
    let lookbacks: Vec<usize> = parse_list(lookbacks, "lookback")?;
    let kernel_list: Vec<AttentionKernel> = kernels
        .split(',')
        .filter(|tok| !tok.trim().is_empty())
        .map(|tok| match tok.trim() {
            "xicor" => Ok(AttentionKernel::Xicor),
            "dot_product" | "dot-product" => Ok(AttentionKernel::DotProduct),
            other => bail!("unknown kernel '{other}'"),
        })
        .collect::<Result<_>>()?;

    let mut table = String::from("metric,size,kernel,seconds\n");
    if !lookbacks.is_empty() && !kernel_list.is_empty() {
        let rows = bench_runtime(&lookbacks, &kernel_list, &config.model_config()?, batch_size, 1, 3)?;
        for row in &rows {
            table.push_str(&format!(
                "train_step,{},{},{:.6}\n",
                row.lookback, row.kernel, row.step_seconds
            ));
        }
    }
    let sizes: Vec<usize> = parse_list(softrank_sizes, "soft-rank size")?;
    if !sizes.is_empty() {
        for (n, seconds) in time_soft_rank(&sizes, 5, 50) {
            table.push_str(&format!("soft_rank,{n},-,{seconds:.9}\n"));
        }
    }
    print!("{table}");
    if let Some(path) = out {
        std::fs::write(path, table)?;
        println!("wrote {}", path.display());
    }
    Ok(0)
}
