//! Multivariate series storage, CSV ingestion, and train/valid/test splits.
//!
//! Normalization statistics come from the train split only; downstream code
//! consumes z-scored values through [`SeriesDataset::normalized`].

use std::io::Write;
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Valid => write!(f, "valid"),
            Split::Test => write!(f, "test"),
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split '{other}'"))),
        }
    }
}

/// How to place the train/valid boundaries of a dataset.
#[derive(Debug, Clone, Copy)]
pub enum SplitSpec {
    /// Fractions of the total length for train and valid.
    Fractions(f64, f64),
    /// Explicit `(train_end, valid_end)` row indices.
    Indices(usize, usize),
}

impl SplitSpec {
    fn resolve(&self, t_total: usize) -> Result<(usize, usize)> {
        let (train_end, valid_end) = match *self {
            SplitSpec::Fractions(ft, fv) => {
                if !(ft > 0.0 && fv > 0.0 && ft + fv < 1.0) {
                    return Err(Error::Config(format!(
                        "split fractions ({ft}, {fv}) must be positive and sum below 1"
                    )));
                }
                let train_end = (t_total as f64 * ft).floor() as usize;
                let valid_end = (t_total as f64 * (ft + fv)).floor() as usize;
                (train_end, valid_end)
            }
            SplitSpec::Indices(a, b) => (a, b),
        };
        if !(0 < train_end && train_end < valid_end && valid_end < t_total) {
            return Err(Error::Config(format!(
                "split boundaries ({train_end}, {valid_end}) must satisfy 0 < train < valid < {t_total}"
            )));
        }
        Ok((train_end, valid_end))
    }
}

/// A `T x C` multivariate series with split boundaries and per-variable
/// z-score statistics computed on the train split.
#[derive(Debug, Clone)]
pub struct SeriesDataset {
    /// Raw values, row-major `T x C`.
    values: Vec<f64>,
    t_total: usize,
    n_vars: usize,
    pub variable_names: Vec<String>,
    pub train_end: usize,
    pub valid_end: usize,
    norm_mean: Vec<f64>,
    norm_std: Vec<f64>,
    /// Variables constant over the train split; their std is clamped to 1.
    pub constant_columns: Vec<usize>,
}

impl SeriesDataset {
    pub fn new(
        values: Vec<f64>,
        n_vars: usize,
        variable_names: Vec<String>,
        splits: SplitSpec,
    ) -> Result<Self> {
        if n_vars == 0 || values.len() % n_vars != 0 {
            return Err(Error::Config(format!(
                "{} values do not form rows of {n_vars} variables",
                values.len()
            )));
        }
        let t_total = values.len() / n_vars;
        if variable_names.len() != n_vars {
            return Err(Error::Config(format!(
                "{} names for {n_vars} variables",
                variable_names.len()
            )));
        }
        let (train_end, valid_end) = splits.resolve(t_total)?;

        let mut norm_mean = vec![0.0; n_vars];
        let mut norm_std = vec![0.0; n_vars];
        let mut constant_columns = Vec::new();
        for c in 0..n_vars {
            let mut sum = 0.0;
            for t in 0..train_end {
                sum += values[t * n_vars + c];
            }
            let mean = sum / train_end as f64;
            let mut var = 0.0;
            for t in 0..train_end {
                let d = values[t * n_vars + c] - mean;
                var += d * d;
            }
            var /= train_end as f64;
            norm_mean[c] = mean;
            if var == 0.0 {
                constant_columns.push(c);
                norm_std[c] = 1.0;
            } else {
                norm_std[c] = var.sqrt();
            }
        }
        Ok(SeriesDataset {
            values,
            t_total,
            n_vars,
            variable_names,
            train_end,
            valid_end,
            norm_mean,
            norm_std,
            constant_columns,
        })
    }

    pub fn t_total(&self) -> usize {
        self.t_total
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn raw(&self, t: usize, c: usize) -> f64 {
        self.values[t * self.n_vars + c]
    }

    pub fn normalized(&self, t: usize, c: usize) -> f64 {
        (self.raw(t, c) - self.norm_mean[c]) / self.norm_std[c]
    }

    pub fn denormalize(&self, z: f64, c: usize) -> f64 {
        z * self.norm_std[c] + self.norm_mean[c]
    }

    pub fn norm_stats(&self) -> (&[f64], &[f64]) {
        (&self.norm_mean, &self.norm_std)
    }

    pub fn raw_column(&self, c: usize) -> Vec<f64> {
        (0..self.t_total).map(|t| self.raw(t, c)).collect()
    }

    /// Z-scored column, materialized once per training run.
    pub fn normalized_column(&self, c: usize) -> Vec<f64> {
        (0..self.t_total).map(|t| self.normalized(t, c)).collect()
    }

    pub fn split_range(&self, split: Split) -> Range<usize> {
        match split {
            Split::Train => 0..self.train_end,
            Split::Valid => self.train_end..self.valid_end,
            Split::Test => self.valid_end..self.t_total,
        }
    }

    /// Write the raw series as CSV: integer timestamp column plus one column
    /// per variable, shortest round-trip float formatting.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        write!(w, "date")?;
        for name in &self.variable_names {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for t in 0..self.t_total {
            write!(w, "{t}")?;
            for c in 0..self.n_vars {
                write!(w, ",{}", self.raw(t, c))?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Load a CSV whose first column is a timestamp (ignored for modeling) and
/// whose remaining columns are numeric variables named by the header row.
pub fn load_csv(path: &Path, splits: SplitSpec) -> Result<SeriesDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::Config(format!(
            "{}: need a timestamp column plus at least one variable",
            path.display()
        )));
    }
    let variable_names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let n_vars = variable_names.len();
    let mut values = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != n_vars + 1 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                row: row_idx + 2,
                column: "-".into(),
                detail: format!("expected {} fields, found {}", n_vars + 1, record.len()),
            });
        }
        for (c, field) in record.iter().skip(1).enumerate() {
            let parsed: f64 = field.parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                row: row_idx + 2,
                column: variable_names[c].clone(),
                detail: format!("'{field}' is not numeric"),
            })?;
            values.push(parsed);
        }
    }
    SeriesDataset::new(values, n_vars, variable_names, splits)
}
