//! Desk-scale multivariate forecasting: dataset ingestion and synthesis,
//! patching, a small encoder forecaster hosting either attention kernel,
//! training and evaluation with MAE/MSE, sensitivity sweeps, and runtime
//! benchmarks.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod model;
pub mod patch;
pub mod sweep;
pub mod synth;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::HarnessConfig;
pub use dataset::{load_csv, SeriesDataset, Split, SplitSpec};
pub use model::{ForecastModel, ModelConfig, ParamSet};
pub use patch::{patchify, PatchConfig};
pub use sweep::{bench_runtime, sweep_head_dim, time_soft_rank, BenchRow, SweepRow};
pub use synth::{synth_dataset, SynthKind};
pub use train::{
    evaluate, evaluate_scaled, train, EvalReport, LossCurvePoint, TrainConfig, TrainResult,
};
