//! Mini-batch Adam training on MSE over sliding windows, plus deterministic
//! MAE/MSE evaluation.
//!
//! Windows live entirely inside their split: a split of length `L` yields
//! `L - T - H + 1` (window, target) items per variable. Every source of
//! randomness derives from the run seed, so loss curves are bit-reproducible.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{concat_flat, Tape, Tensor};

use super::dataset::{SeriesDataset, Split};
use super::model::{ForecastModel, ParamSet};

/// Optimizer and schedule settings. The loss is always MSE.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_opt: f64,
    pub seed: u64,
    /// Epochs without validation improvement before stopping early.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_opt: 1e-8,
            seed: 7,
            patience: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config("batch_size and patience must be positive".into()));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("eps_opt", self.eps_opt),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Metrics of one evaluation pass, on normalized scale unless noted.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub split: Split,
    pub mae: f64,
    pub mse: f64,
    /// `(mae, mse)` per horizon step.
    pub per_horizon: Vec<(f64, f64)>,
    pub n_windows: usize,
    pub wall_seconds: f64,
    pub config_fingerprint: String,
}

/// One row of the training curve; epoch 0 is the initialized model.
#[derive(Debug, Clone, Copy)]
pub struct LossCurvePoint {
    pub epoch: usize,
    /// Mean training batch loss; NaN for the epoch-0 row.
    pub train_loss: f64,
    pub valid_mse: f64,
    pub valid_mae: f64,
}

#[derive(Debug)]
pub struct TrainResult {
    pub model: ForecastModel,
    pub curve: Vec<LossCurvePoint>,
    pub best_epoch: usize,
    pub wall_seconds: f64,
}

/// (variable, window start) work items for a split.
fn split_items(model: &ForecastModel, dataset: &SeriesDataset, split: Split) -> Result<Vec<(usize, usize)>> {
    let t = model.cfg.patch.lookback;
    let h = model.cfg.patch.horizon;
    let range = dataset.split_range(split);
    let len = range.len();
    if len < t + h {
        return Err(Error::Config(format!(
            "{split} split has {len} rows; too few for one lookback+horizon window of {}",
            t + h
        )));
    }
    let mut items = Vec::with_capacity((len - t - h + 1) * dataset.n_vars());
    for c in 0..dataset.n_vars() {
        for s in range.start..=range.end - t - h {
            items.push((c, s));
        }
    }
    Ok(items)
}

pub(crate) struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: usize,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub(crate) fn new(params: &ParamSet, cfg: &TrainConfig) -> Self {
        Adam {
            m: params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect(),
            v: params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect(),
            t: 0,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps_opt,
        }
    }

    pub(crate) fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (idx, (_, tensor)) in params.tensors_mut().enumerate() {
            let g = grads[idx].data();
            let mut data = tensor.data().to_vec();
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for i in 0..data.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                data[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            *tensor = Tensor::from_vec(tensor.shape().to_vec(), data).unwrap();
        }
    }
}

/// One optimizer step over a batch of (variable, start) items.
/// Returns the batch loss.
pub(crate) fn training_step(
    model: &mut ForecastModel,
    columns: &[Vec<f64>],
    batch: &[(usize, usize)],
    adam: &mut Adam,
) -> Result<f64> {
    let t = model.cfg.patch.lookback;
    let h = model.cfg.patch.horizon;
    let tape = Tape::new();
    let watched = model.params.watch_all(&tape);
    let mut losses = Vec::with_capacity(batch.len());
    for &(c, s) in batch {
        let window = &columns[c][s..s + t];
        let target = Tensor::vector(&columns[c][s + t..s + t + h]);
        let pred = model.forward_window(&watched, window)?;
        let diff = pred.sub(&target)?;
        losses.push(diff.mul(&diff)?.mean()?);
    }
    let loss = concat_flat(&losses, vec![losses.len()])?.mean()?;
    let loss_value = loss.item()?;
    let grads = loss.backward()?;
    let grad_tensors: Vec<Tensor> = watched
        .iter()
        .map(|(_, t)| grads.get(t).expect("watched parameter has a gradient"))
        .collect();
    adam.step(&mut model.params, &grad_tensors);
    Ok(loss_value)
}

/// Train with mini-batch Adam; validation runs each epoch and the weights
/// with the best validation MSE are retained.
pub fn train(
    mut model: ForecastModel,
    dataset: &SeriesDataset,
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    cfg.validate()?;
    let start = Instant::now();
    let items = split_items(&model, dataset, Split::Train)?;
    // Materialize normalized columns once.
    let columns: Vec<Vec<f64>> = (0..dataset.n_vars())
        .map(|c| dataset.normalized_column(c))
        .collect();

    let initial = evaluate(&model, dataset, Split::Valid)?;
    let mut curve = vec![LossCurvePoint {
        epoch: 0,
        train_loss: f64::NAN,
        valid_mse: initial.mse,
        valid_mae: initial.mae,
    }];
    let mut best = (0usize, initial.mse, model.params.clone());
    let mut adam = Adam::new(&model.params, cfg);

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..items.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(
            cfg.seed
                .wrapping_mul(0x9e3779b97f4a7c15)
                .wrapping_add(epoch as u64),
        );
        shuffle(&mut order, &mut rng);

        let mut epoch_loss = 0.0;
        let mut n_batches = 0;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<(usize, usize)> = chunk.iter().map(|&i| items[i]).collect();
            let loss = training_step(&mut model, &columns, &batch, &mut adam)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, step });
            }
            epoch_loss += loss;
            n_batches += 1;
        }

        let report = evaluate(&model, dataset, Split::Valid)?;
        curve.push(LossCurvePoint {
            epoch,
            train_loss: epoch_loss / n_batches as f64,
            valid_mse: report.mse,
            valid_mae: report.mae,
        });
        if report.mse < best.1 {
            best = (epoch, report.mse, model.params.clone());
        } else if epoch - best.0 >= cfg.patience {
            break;
        }
    }

    model.params = best.2;
    Ok(TrainResult {
        model,
        curve,
        best_epoch: best.0,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    use rand::Rng;
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}

/// MAE and MSE over all windows and variables of a split, normalized scale.
pub fn evaluate(model: &ForecastModel, dataset: &SeriesDataset, split: Split) -> Result<EvalReport> {
    evaluate_scaled(model, dataset, split, false)
}

/// As [`evaluate`], optionally reporting on the raw scale of the data.
pub fn evaluate_scaled(
    model: &ForecastModel,
    dataset: &SeriesDataset,
    split: Split,
    raw_scale: bool,
) -> Result<EvalReport> {
    let start = Instant::now();
    let items = split_items(model, dataset, split)?;
    let t = model.cfg.patch.lookback;
    let h = model.cfg.patch.horizon;
    let columns: Vec<Vec<f64>> = (0..dataset.n_vars())
        .map(|c| dataset.normalized_column(c))
        .collect();
    let mut abs_sum = vec![0.0; h];
    let mut sq_sum = vec![0.0; h];
    for &(c, s) in &items {
        let window = &columns[c][s..s + t];
        let pred = model.forward_window(&model.params, window)?;
        for step in 0..h {
            let mut p = pred.data()[step];
            let mut y = columns[c][s + t + step];
            if raw_scale {
                p = dataset.denormalize(p, c);
                y = dataset.denormalize(y, c);
            }
            let e = p - y;
            abs_sum[step] += e.abs();
            sq_sum[step] += e * e;
        }
    }
    let n = items.len() as f64;
    let per_horizon: Vec<(f64, f64)> = abs_sum
        .iter()
        .zip(&sq_sum)
        .map(|(&a, &s)| (a / n, s / n))
        .collect();
    let mae = abs_sum.iter().sum::<f64>() / (n * h as f64);
    let mse = sq_sum.iter().sum::<f64>() / (n * h as f64);
    Ok(EvalReport {
        split,
        mae,
        mse,
        per_horizon,
        n_windows: items.len(),
        wall_seconds: start.elapsed().as_secs_f64(),
        config_fingerprint: model.cfg.fingerprint(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::{AttentionConfig, AttentionKernel};
    use crate::forecast::model::ModelConfig;
    use crate::forecast::patch::PatchConfig;
    use crate::forecast::synth::{synth_dataset, SynthKind};

    fn tiny_model(kernel: AttentionKernel, lookback: usize, horizon: usize) -> ForecastModel {
        let attention = AttentionConfig::new(8, 2).unwrap().with_kernel(kernel);
        let patch = PatchConfig::new(lookback, horizon, 8, 4).unwrap();
        ForecastModel::init(ModelConfig::new(attention, patch, 1, 16).unwrap(), 3)
    }

    #[test]
    fn window_count_matches_split_arithmetic() {
        let model = tiny_model(AttentionKernel::DotProduct, 16, 4);
        let ds = synth_dataset(SynthKind::SineMix, 500, 2, 1).unwrap();
        let items = split_items(&model, &ds, Split::Train).unwrap();
        let train_len = ds.split_range(Split::Train).len();
        assert_eq!(items.len(), (train_len - 16 - 4 + 1) * 2);
    }

    #[test]
    fn too_small_split_is_a_config_error() {
        let model = tiny_model(AttentionKernel::DotProduct, 96, 24);
        let ds = synth_dataset(SynthKind::SineMix, 400, 1, 1).unwrap();
        // valid split has 80 rows < 120
        assert!(matches!(
            split_items(&model, &ds, Split::Valid),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_epoch_train_returns_initialized_model() {
        let ds = synth_dataset(SynthKind::SineMix, 500, 2, 5).unwrap();
        let model = tiny_model(AttentionKernel::DotProduct, 16, 4);
        let before: Vec<Vec<f64>> = model.params.iter().map(|(_, t)| t.data().to_vec()).collect();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let result = train(model, &ds, &cfg).unwrap();
        assert_eq!(result.curve.len(), 1);
        assert_eq!(result.best_epoch, 0);
        for ((_, after), b) in result.model.params.iter().zip(before) {
            assert_eq!(after.data(), b.as_slice());
        }
    }

    #[test]
    fn short_training_is_deterministic_per_seed() {
        let ds = synth_dataset(SynthKind::SineMix, 500, 2, 5).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let run = |seed: u64| {
            let model = tiny_model(AttentionKernel::DotProduct, 16, 4);
            let cfg = TrainConfig { seed, ..cfg.clone() };
            train(model, &ds, &cfg).unwrap()
        };
        let a = run(11);
        let b = run(11);
        for (pa, pb) in a.curve.iter().zip(&b.curve) {
            assert_eq!(pa.valid_mse.to_bits(), pb.valid_mse.to_bits());
            assert_eq!(pa.train_loss.to_bits(), pb.train_loss.to_bits());
        }
        let c = run(12);
        assert_ne!(a.curve[1].train_loss.to_bits(), c.curve[1].train_loss.to_bits());
    }

    #[test]
    fn metrics_match_two_loop_reference() {
        let ds = synth_dataset(SynthKind::SineMix, 500, 2, 8).unwrap();
        let model = tiny_model(AttentionKernel::DotProduct, 16, 4);
        let report = evaluate(&model, &ds, Split::Test).unwrap();

        // Direct reference computation.
        let range = ds.split_range(Split::Test);
        let mut abs = 0.0;
        let mut sq = 0.0;
        let mut count = 0.0;
        for c in 0..2 {
            let col = ds.normalized_column(c);
            for s in range.start..=range.end - 20 {
                let pred = model.forward_window(&model.params, &col[s..s + 16]).unwrap();
                for step in 0..4 {
                    let e = pred.data()[step] - col[s + 16 + step];
                    abs += e.abs();
                    sq += e * e;
                    count += 1.0;
                }
            }
        }
        assert!((report.mae - abs / count).abs() < 1e-12);
        assert!((report.mse - sq / count).abs() < 1e-12);
        assert_eq!(report.per_horizon.len(), 4);
    }

    #[test]
    fn constant_zero_predictor_scores_target_variance() {
        let ds = synth_dataset(SynthKind::SineMix, 2000, 2, 4).unwrap();
        let mut model = tiny_model(AttentionKernel::DotProduct, 16, 4);
        // Zero the head: predictions become exactly zero.
        for (name, tensor) in model.params.tensors_mut() {
            if name == "head.w" || name == "head.b" {
                *tensor = Tensor::zeros(tensor.shape().to_vec());
            }
        }
        let report = evaluate(&model, &ds, Split::Train).unwrap();
        assert!((report.mse - 1.0).abs() <= 0.1, "mse = {}", report.mse);
    }

    #[test]
    fn perfect_predictor_has_zero_error() {
        // Constant data normalizes to zero everywhere, so a zero-headed model
        // replays the target exactly.
        use crate::forecast::dataset::{SeriesDataset, SplitSpec};
        let ds = SeriesDataset::new(
            vec![7.5; 200],
            1,
            vec!["v0".into()],
            SplitSpec::Indices(100, 150),
        )
        .unwrap();
        let mut model = tiny_model(AttentionKernel::DotProduct, 16, 4);
        for (name, tensor) in model.params.tensors_mut() {
            if name == "head.w" || name == "head.b" {
                *tensor = Tensor::zeros(tensor.shape().to_vec());
            }
        }
        let report = evaluate(&model, &ds, Split::Test).unwrap();
        assert_eq!(report.mae, 0.0);
        assert_eq!(report.mse, 0.0);
    }
}
