//! Head-dimension sensitivity sweeps and wall-clock runtime benchmarks.

use std::time::Instant;

use crate::attention::AttentionKernel;
use crate::error::{Error, Result};
use crate::rank::soft_rank_with_blocks;

use super::dataset::{SeriesDataset, Split};
use super::model::{ForecastModel, ModelConfig};
use super::patch::PatchConfig;
use super::synth::{synth_dataset, SynthKind};
use super::train::{evaluate, train, Adam, EvalReport, TrainConfig};

/// One row of a head-dimension sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub head_dim: usize,
    pub n_head: usize,
    pub report: EvalReport,
    pub train_seconds: f64,
    pub best_epoch: usize,
}

/// Train one model per head dimension at fixed model width and report test
/// metrics. Every dimension must divide the model width.
pub fn sweep_head_dim(
    dims: &[usize],
    base: &ModelConfig,
    dataset: &SeriesDataset,
    train_cfg: &TrainConfig,
) -> Result<Vec<SweepRow>> {
    let model_dim = base.attention.model_dim;
    for &d in dims {
        if d == 0 || model_dim % d != 0 {
            return Err(Error::Config(format!(
                "head dimension {d} does not divide model_dim {model_dim}"
            )));
        }
    }
    let mut rows = Vec::with_capacity(dims.len());
    for &d in dims {
        let n_head = model_dim / d;
        let mut cfg = base.clone();
        cfg.attention = crate::attention::AttentionConfig {
            n_head,
            ..base.attention.clone()
        };
        let model = ForecastModel::init(cfg, train_cfg.seed);
        let result = train(model, dataset, train_cfg)?;
        let report = evaluate(&result.model, dataset, Split::Test)?;
        rows.push(SweepRow {
            head_dim: d,
            n_head,
            report,
            train_seconds: result.wall_seconds,
            best_epoch: result.best_epoch,
        });
    }
    Ok(rows)
}

/// Measured seconds per training step for one (lookback, kernel) pair.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub lookback: usize,
    pub kernel: AttentionKernel,
    pub step_seconds: f64,
}

/// Wall-clock per training step across lookback lengths and kernels, after
/// warm-up. One batch per measurement, repeated; the minimum is reported.
pub fn bench_runtime(
    lookbacks: &[usize],
    kernels: &[AttentionKernel],
    base: &ModelConfig,
    batch_size: usize,
    warmup: usize,
    reps: usize,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &lookback in lookbacks {
        let patch = PatchConfig::new(
            lookback,
            base.patch.horizon,
            base.patch.patch_len.min(lookback),
            base.patch.stride.min(base.patch.patch_len.min(lookback)),
        )?;
        let t_total = (lookback + base.patch.horizon + 16).max(134) * 3;
        let dataset = synth_dataset(SynthKind::SineMix, t_total.max(400), 2, 99)?;
        for &kernel in kernels {
            let cfg = ModelConfig::new(
                base.attention.clone().with_kernel(kernel),
                patch,
                base.n_blocks,
                base.ff_dim,
            )?;
            let mut model = ForecastModel::init(cfg, 1);
            let columns: Vec<Vec<f64>> = (0..dataset.n_vars())
                .map(|c| dataset.normalized_column(c))
                .collect();
            let batch: Vec<(usize, usize)> = (0..batch_size)
                .map(|i| (i % dataset.n_vars(), i * 3))
                .collect();
            let train_cfg = TrainConfig::default();
            let mut adam = Adam::new(&model.params, &train_cfg);
            for _ in 0..warmup {
                super::train::training_step(&mut model, &columns, &batch, &mut adam)?;
            }
            let mut best = f64::INFINITY;
            for _ in 0..reps {
                let start = Instant::now();
                super::train::training_step(&mut model, &columns, &batch, &mut adam)?;
                best = best.min(start.elapsed().as_secs_f64());
            }
            rows.push(BenchRow {
                lookback,
                kernel,
                step_seconds: best,
            });
        }
    }
    Ok(rows)
}

/// Minimum seconds per `soft_rank` forward call at each size, measured over
/// `reps` batches of `inner` calls each.
pub fn time_soft_rank(sizes: &[usize], reps: usize, inner: usize) -> Vec<(usize, f64)> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1234);
    sizes
        .iter()
        .map(|&n| {
            let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let mut best = f64::INFINITY;
            for _ in 0..reps {
                let start = Instant::now();
                for _ in 0..inner {
                    let (values, _) = soft_rank_with_blocks(&data, 0.1).unwrap();
                    std::hint::black_box(values);
                }
                best = best.min(start.elapsed().as_secs_f64() / inner as f64);
            }
            (n, best)
        })
        .collect()
}
