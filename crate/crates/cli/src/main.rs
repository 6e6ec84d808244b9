//! `xicor`: train and inspect nonlinear-correlation attention forecasters.

mod commands;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use xicor_core::forecast::HarnessConfig;

#[derive(Parser)]
#[command(
    name = "xicor",
    about = "Differentiable rank-correlation attention: kernels, diagnostics, and a desk-scale forecasting harness",
    version
)]
struct Cli {
    /// Key-value TOML config file; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

/// Config fields exposed as flags. Anything set here wins over the file.
#[derive(Args, Debug, Default, Clone)]
struct Overrides {
    #[arg(long)]
    model_dim: Option<usize>,
    #[arg(long)]
    n_head: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// xicor | dot_product
    #[arg(long)]
    kernel: Option<String>,
    /// softmax_xi | raw_xi_rownorm
    #[arg(long)]
    score_mode: Option<String>,
    /// soft | hard_st
    #[arg(long)]
    rank_mode: Option<String>,
    #[arg(long)]
    n_blocks: Option<usize>,
    #[arg(long)]
    ff_dim: Option<usize>,
    #[arg(long)]
    lookback: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    patch_len: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    train_frac: Option<f64>,
    #[arg(long)]
    valid_frac: Option<f64>,
}

impl Overrides {
    fn apply(&self, cfg: &mut HarnessConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { cfg.$field = v.clone(); })*
            };
        }
        set!(
            model_dim, n_head, tau, epsilon, kernel, score_mode, rank_mode, n_blocks, ff_dim,
            lookback, horizon, patch_len, stride, epochs, batch_size, learning_rate, seed,
            patience, train_frac, valid_frac
        );
    }
}

/// Where a dataset comes from: a CSV file or a synthetic generator.
#[derive(Args, Debug, Clone)]
struct DataSource {
    /// CSV file: timestamp column first, then one column per variable.
    #[arg(long, conflicts_with = "synth")]
    data: Option<PathBuf>,
    /// Synthetic kind: sine_mix | logistic_map | monotone_coupled | independent_noise
    #[arg(long)]
    synth: Option<String>,
    /// Rows for synthetic data.
    #[arg(long, default_value_t = 600)]
    rows: usize,
    /// Variables for synthetic data.
    #[arg(long, default_value_t = 4)]
    cols: usize,
    /// Seed for synthetic data.
    #[arg(long, default_value_t = 7)]
    synth_seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset to CSV.
    Synth {
        /// sine_mix | logistic_map | monotone_coupled | independent_noise
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 600)]
        rows: usize,
        #[arg(long, default_value_t = 4)]
        cols: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Chatterjee xi (both directions) and Pearson rho between two columns.
    Xi {
        #[arg(long)]
        data: PathBuf,
        /// Column name or zero-based index (timestamp column excluded).
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
    },
    /// Pairwise correlation matrix over all columns, as CSV.
    CorrMatrix {
        #[arg(long)]
        data: PathBuf,
        /// pearson | xi
        #[arg(long, default_value = "pearson")]
        kind: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Debug the sorting kernel on an inline vector.
    Sort {
        /// Comma-separated values, e.g. "1.2,9.3,1.7,3.6".
        #[arg(long)]
        values: String,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        /// Also print the soft permutation matrix.
        #[arg(long)]
        matrix: bool,
    },
    /// Debug the ranking kernel on an inline vector.
    Rank {
        #[arg(long)]
        values: String,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
    },
    /// Run the finite-difference gradient suites; exit nonzero on failure.
    GradCheck {
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Train a forecaster and write metrics, loss curve, and a checkpoint.
    Train {
        #[command(flatten)]
        source: DataSource,
        #[arg(long, default_value = "runs/latest")]
        out_dir: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evaluate a checkpoint on a split; optionally export score matrices.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        source: DataSource,
        /// train | valid | test
        #[arg(long, default_value = "test")]
        split: String,
        /// Report on the raw data scale instead of the normalized one.
        #[arg(long)]
        raw: bool,
        /// Directory for per-head score/weight CSVs of the first window.
        #[arg(long)]
        export_scores: Option<PathBuf>,
    },
    /// Train once per head dimension and tabulate test metrics.
    Sweep {
        /// Comma-separated head dimensions, e.g. "32,64,128".
        #[arg(long)]
        dims: String,
        #[command(flatten)]
        source: DataSource,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Wall-clock training-step benchmarks and soft-rank scaling.
    Bench {
        /// Comma-separated lookback lengths.
        #[arg(long, default_value = "48,96,192,336")]
        lookbacks: String,
        /// Comma-separated kernels.
        #[arg(long, default_value = "xicor,dot_product")]
        kernels: String,
        /// Comma-separated soft-rank sizes; empty string skips the scaling table.
        #[arg(long, default_value = "1000,2000,4000,8000")]
        softrank_sizes: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            1
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32> {
    let mut config = match &cli.config {
        Some(path) => HarnessConfig::load(path)?,
        None => HarnessConfig::default(),
    };
    match cli.command {
        Command::Synth {
            kind,
            rows,
            cols,
            seed,
            out,
        } => commands::synth(&kind, rows, cols, seed, &out),
        Command::Xi { data, x, y } => commands::xi(&data, &x, &y),
        Command::CorrMatrix { data, kind, out } => commands::corr_matrix(&data, &kind, out.as_deref()),
        Command::Sort { values, tau, matrix } => commands::sort(&values, tau, matrix),
        Command::Rank { values, epsilon } => commands::rank(&values, epsilon),
        Command::GradCheck { seed } => commands::grad_check(seed),
        Command::Train {
            source,
            out_dir,
            overrides,
        } => {
            overrides.apply(&mut config);
            commands::train(&config, &source, &out_dir)
        }
        Command::Eval {
            checkpoint,
            source,
            split,
            raw,
            export_scores,
        } => commands::eval(&checkpoint, &source, &split, raw, export_scores.as_deref()),
        Command::Sweep {
            dims,
            source,
            out,
            overrides,
        } => {
            overrides.apply(&mut config);
            commands::sweep(&config, &dims, &source, out.as_deref())
        }
        Command::Bench {
            lookbacks,
            kernels,
            softrank_sizes,
            out,
            overrides,
        } => {
            // Benchmarks default to small batches; an explicit flag wins.
            let batch = overrides.batch_size.unwrap_or(8);
            overrides.apply(&mut config);
            commands::bench(&config, &lookbacks, &kernels, &softrank_sizes, batch, out.as_deref())
        }
    }
}
