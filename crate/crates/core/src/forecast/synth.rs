//! Deterministic synthetic datasets, one family per qualitative dependence
//! regime: smooth oscillations, coupled chaos, strictly monotone pairs, and
//! pure noise.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::dataset::{SeriesDataset, SplitSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// Sums of seeded sinusoids plus small uniform noise.
    SineMix,
    /// Coupled logistic maps `x_{t+1} = 3.9 x_t (1 - x_t)` per variable with
    /// ring coupling to the previous variable.
    LogisticMap,
    /// Variable pairs `(x, f(x))` for strictly monotone `f`.
    MonotoneCoupled,
    /// I.i.d. uniform columns.
    IndependentNoise,
}

impl std::fmt::Display for SynthKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SynthKind::SineMix => "sine_mix",
            SynthKind::LogisticMap => "logistic_map",
            SynthKind::MonotoneCoupled => "monotone_coupled",
            SynthKind::IndependentNoise => "independent_noise",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for SynthKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sine_mix" | "sine-mix" => Ok(SynthKind::SineMix),
            "logistic_map" | "logistic-map" => Ok(SynthKind::LogisticMap),
            "monotone_coupled" | "monotone-coupled" => Ok(SynthKind::MonotoneCoupled),
            "independent_noise" | "independent-noise" => Ok(SynthKind::IndependentNoise),
            other => Err(Error::Config(format!("unknown synthetic kind '{other}'"))),
        }
    }
}

const LOGISTIC_R: f64 = 3.9;
const LOGISTIC_COUPLING: f64 = 0.3;

/// Generate a synthetic dataset, bit-identical for identical arguments.
/// Splits default to (60%, 20%, 20%).
pub fn synth_dataset(
    kind: SynthKind,
    t_total: usize,
    n_vars: usize,
    seed: u64,
) -> Result<SeriesDataset> {
    if t_total < 400 {
        return Err(Error::Config(format!(
            "synthetic datasets need at least 400 rows, got {t_total}"
        )));
    }
    if n_vars == 0 {
        return Err(Error::Config("need at least one variable".into()));
    }
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let columns: Vec<Vec<f64>> = match kind {
        SynthKind::SineMix => (0..n_vars).map(|_| sine_column(t_total, &mut rng)).collect(),
        SynthKind::LogisticMap => logistic_columns(t_total, n_vars, &mut rng),
        SynthKind::MonotoneCoupled => monotone_columns(t_total, n_vars, &mut rng),
        SynthKind::IndependentNoise => (0..n_vars)
            .map(|_| (0..t_total).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect(),
    };
    let mut values = Vec::with_capacity(t_total * n_vars);
    for t in 0..t_total {
        for col in &columns {
            values.push(col[t]);
        }
    }
    let names = (0..n_vars).map(|c| format!("v{c}")).collect();
    SeriesDataset::new(values, n_vars, names, SplitSpec::Fractions(0.6, 0.2))
}

fn sine_column(t_total: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n_waves = 3;
    let waves: Vec<(f64, f64, f64)> = (0..n_waves)
        .map(|_| {
            (
                rng.gen_range(0.5..1.5),
                rng.gen_range(8.0..64.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    (0..t_total)
        .map(|t| {
            let base: f64 = waves
                .iter()
                .map(|(amp, period, phase)| {
                    amp * (std::f64::consts::TAU * t as f64 / period + phase).sin()
                })
                .sum();
            base + 0.05 * rng.gen_range(-1.0..1.0)
        })
        .collect()
}

fn logistic_columns(t_total: usize, n_vars: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let g = |x: f64| LOGISTIC_R * x * (1.0 - x);
    let mut state: Vec<f64> = (0..n_vars).map(|_| rng.gen_range(0.05..0.95)).collect();
    let mut columns = vec![Vec::with_capacity(t_total); n_vars];
    // Burn-in so the attractor, not the seed point, shapes the series.
    for step in 0..t_total + 100 {
        if step >= 100 {
            for (c, col) in columns.iter_mut().enumerate() {
                col.push(state[c]);
            }
        }
        let prev = state.clone();
        for c in 0..n_vars {
            let neighbor = prev[(c + n_vars - 1) % n_vars];
            state[c] = (1.0 - LOGISTIC_COUPLING) * g(prev[c]) + LOGISTIC_COUPLING * g(neighbor);
        }
    }
    columns
}

fn monotone_columns(t_total: usize, n_vars: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    // Strictly increasing transforms applied pairwise; an odd trailing
    // variable stays independent noise.
    let transforms: [fn(f64) -> f64; 4] = [
        |x| x.exp(),
        |x| x * x * x + x,
        |x| x.sinh(),
        |x| x / (1.0 + x.abs()) + 2.0 * x,
    ];
    let mut columns = Vec::with_capacity(n_vars);
    let mut pair = 0;
    while columns.len() < n_vars {
        let base: Vec<f64> = (0..t_total).map(|_| rng.gen_range(0.0..1.0)).collect();
        if columns.len() + 1 < n_vars {
            let f = transforms[pair % transforms.len()];
            let coupled: Vec<f64> = base.iter().map(|&x| f(x)).collect();
            columns.push(base);
            columns.push(coupled);
            pair += 1;
        } else {
            columns.push(base);
        }
    }
    columns
}
