//! Exact (non-differentiable) rank statistics: Chatterjee's xi, Pearson's
//! rho, and pairwise correlation matrices for dataset diagnostics. These are
//! the ground-truth oracles for the differentiable pipeline.

use std::io::Write;

use crate::error::{Error, Result};

/// A paired sample `(x_1, y_1), ..., (x_n, y_n)`.
///
/// `xi` additionally requires `y` non-constant; ties are broken by original
/// index (stable sort) rather than at random, so results on tied data are
/// deterministic.
#[derive(Debug, Clone)]
pub struct SamplePair<'a> {
    x: &'a [f64],
    y: &'a [f64],
}

impl<'a> SamplePair<'a> {
    pub fn new(x: &'a [f64], y: &'a [f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Domain(format!(
                "sample lengths differ: {} vs {}",
                x.len(),
                y.len()
            )));
        }
        if x.len() < 2 {
            return Err(Error::Domain(format!(
                "need at least 2 observations, got {}",
                x.len()
            )));
        }
        Ok(SamplePair { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        false // n >= 2 by construction
    }
}

fn is_constant(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] == w[1])
}

/// Stable ascending argsort.
pub(crate) fn argsort_stable(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    idx
}

/// Ascending competition-free ranks in 1..n, ties broken by position.
pub(crate) fn ranks_ascending(values: &[f64]) -> Vec<usize> {
    let order = argsort_stable(values);
    let mut ranks = vec![0usize; values.len()];
    for (rank, &i) in order.iter().enumerate() {
        ranks[i] = rank + 1;
    }
    ranks
}

/// Chatterjee's rank correlation coefficient.
///
/// Sort the pairs by ascending `x`, rank the reordered `y` ascending, and
/// return `1 - 3 * sum |r_{i+1} - r_i| / (n^2 - 1)`.
pub fn xi_exact(pair: &SamplePair<'_>) -> Result<f64> {
    if is_constant(pair.y) {
        return Err(Error::Domain("xi is undefined for constant y".into()));
    }
    let order = argsort_stable(pair.x);
    let y_by_x: Vec<f64> = order.iter().map(|&i| pair.y[i]).collect();
    let ranks = ranks_ascending(&y_by_x);
    let n = pair.len();
    let sum: f64 = ranks
        .windows(2)
        .map(|w| (w[1] as f64 - w[0] as f64).abs())
        .sum();
    Ok(1.0 - 3.0 * sum / ((n * n - 1) as f64))
}

/// Pearson's correlation coefficient of a mean-centered pair.
pub fn pearson(pair: &SamplePair<'_>) -> Result<f64> {
    if is_constant(pair.x) || is_constant(pair.y) {
        return Err(Error::Domain(
            "pearson is undefined for a constant variable".into(),
        ));
    }
    let n = pair.len() as f64;
    let mx = pair.x.iter().sum::<f64>() / n;
    let my = pair.y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in pair.x.iter().zip(pair.y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Domain("pearson: zero variance".into()));
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationKind {
    Pearson,
    /// Directional: entry (i, j) measures how well column i explains column j.
    Xi,
}

impl std::fmt::Display for CorrelationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CorrelationKind::Pearson => write!(f, "pearson"),
            CorrelationKind::Xi => write!(f, "xi"),
        }
    }
}

/// Pairwise correlation matrix over the columns of a series.
///
/// Constant columns are flagged and their entries set to NaN rather than
/// aborting the whole diagnostic.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    pub kind: CorrelationKind,
    pub names: Vec<String>,
    /// Row-major `C x C`; entry `(i, j)` correlates column i with column j.
    pub values: Vec<f64>,
    pub constant_columns: Vec<usize>,
}

impl CorrelationMatrix {
    pub fn size(&self) -> usize {
        self.names.len()
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size() + j]
    }

    /// CSV with variable names as row and column headers.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["variable".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.size() {
            let mut row = vec![self.names[i].clone()];
            row.extend((0..self.size()).map(|j| format!("{:.12}", self.at(i, j))));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Correlate every ordered pair of columns. `columns[c]` holds the T samples
/// of variable c; all columns must share a length of at least 3.
pub fn correlation_matrix(
    columns: &[Vec<f64>],
    names: &[String],
    kind: CorrelationKind,
) -> Result<CorrelationMatrix> {
    let c = columns.len();
    if names.len() != c {
        return Err(Error::Config(format!(
            "{} names for {} columns",
            names.len(),
            c
        )));
    }
    let t = columns.first().map_or(0, Vec::len);
    if t < 3 || columns.iter().any(|col| col.len() != t) {
        return Err(Error::Domain(
            "correlation_matrix needs equal-length columns with at least 3 rows".into(),
        ));
    }
    let constant_columns: Vec<usize> = (0..c).filter(|&i| is_constant(&columns[i])).collect();
    let mut values = vec![f64::NAN; c * c];
    match kind {
        CorrelationKind::Pearson => {
            for i in 0..c {
                for j in i..c {
                    if constant_columns.contains(&i) || constant_columns.contains(&j) {
                        continue;
                    }
                    let r = pearson(&SamplePair::new(&columns[i], &columns[j])?)?;
                    // Mirrored assignment keeps the matrix exactly symmetric.
                    values[i * c + j] = r;
                    values[j * c + i] = r;
                }
            }
        }
        CorrelationKind::Xi => {
            for i in 0..c {
                for j in 0..c {
                    if constant_columns.contains(&i) || constant_columns.contains(&j) {
                        continue;
                    }
                    values[i * c + j] = xi_exact(&SamplePair::new(&columns[i], &columns[j])?)?;
                }
            }
        }
    }
    Ok(CorrelationMatrix {
        kind,
        names: names.to_vec(),
        values,
        constant_columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xi_monotone_hits_analytic_value() {
        // Strictly monotone y: sum |dr| = n - 1, so xi = (n - 2) / (n + 1).
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 2.0, 3.0, 4.0];
        let xi = xi_exact(&SamplePair::new(&x, &y).unwrap()).unwrap();
        assert_eq!(xi, 1.0 - 9.0 / 15.0);
        assert_eq!(xi, (4.0 - 2.0) / (4.0 + 1.0));
    }

    #[test]
    fn xi_is_invariant_under_rank_reversal() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [4.0, 3.0, 2.0, 1.0];
        let xi = xi_exact(&SamplePair::new(&x, &y).unwrap()).unwrap();
        assert_eq!(xi, 0.4);
    }

    #[test]
    fn xi_hand_evaluated_example() {
        // x sorted already; ranks of y are (2, 4, 1, 3):
        // sum |dr| = 2 + 3 + 2 = 7, xi = 1 - 21/15 = -0.4.
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 4.0, 1.0, 3.0];
        let xi = xi_exact(&SamplePair::new(&x, &y).unwrap()).unwrap();
        assert_eq!(xi, 1.0 - 21.0 / 15.0);
    }

    #[test]
    fn xi_rejects_degenerate_input() {
        let x = [1.0, 2.0, 3.0];
        assert!(matches!(
            xi_exact(&SamplePair::new(&x, &[5.0, 5.0, 5.0]).unwrap()),
            Err(Error::Domain(_))
        ));
        assert!(SamplePair::new(&[1.0], &[2.0]).is_err());
        assert!(SamplePair::new(&x, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn xi_is_directional() {
        // y = x^2 on a symmetric grid: x determines y but not conversely.
        let x: Vec<f64> = (-5..=5).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let fwd = xi_exact(&SamplePair::new(&x, &y).unwrap()).unwrap();
        let rev = xi_exact(&SamplePair::new(&y, &x).unwrap()).unwrap();
        assert!(fwd > rev);
    }

    #[test]
    fn pearson_exact_linear_cases() {
        let p = pearson(&SamplePair::new(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap()).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        let m = pearson(&SamplePair::new(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap()).unwrap();
        assert!((m + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_matches_direct_formula() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 4.0, 9.0, 16.0];
        let p = pearson(&SamplePair::new(&x, &y).unwrap()).unwrap();
        // Direct mean-centered evaluation as the oracle.
        let mx = 2.5;
        let my = 7.5;
        let num: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let dx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum::<f64>().sqrt();
        let dy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum::<f64>().sqrt();
        assert!((p - num / (dx * dy)).abs() < 1e-12);
    }

    #[test]
    fn pearson_rejects_zero_variance() {
        assert!(pearson(&SamplePair::new(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap()).is_err());
    }

    #[test]
    fn matrix_flags_constant_columns() {
        let cols = vec![vec![1.0, 2.0, 3.0, 4.0], vec![7.0; 4], vec![2.0, 1.0, 4.0, 3.0]];
        let names = vec!["a".into(), "b".into(), "c".into()];
        let m = correlation_matrix(&cols, &names, CorrelationKind::Pearson).unwrap();
        assert_eq!(m.constant_columns, vec![1]);
        assert!(m.at(0, 1).is_nan());
        assert!(m.at(1, 1).is_nan());
        assert!(!m.at(0, 2).is_nan());
    }

    #[test]
    fn identical_columns_have_unit_pearson() {
        let cols = vec![vec![1.0, 5.0, 2.0, 4.0], vec![1.0, 5.0, 2.0, 4.0]];
        let names = vec!["a".into(), "b".into()];
        let m = correlation_matrix(&cols, &names, CorrelationKind::Pearson).unwrap();
        assert!((m.at(0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn xi_matrix_matches_looped_calls() {
        let cols = vec![
            vec![0.3, 0.9, 0.1, 0.7, 0.5],
            vec![0.8, 0.2, 0.6, 0.4, 1.0],
            vec![1.5, 0.3, 0.9, 2.1, 0.0],
        ];
        let names = vec!["a".into(), "b".into(), "c".into()];
        let m = correlation_matrix(&cols, &names, CorrelationKind::Xi).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let direct =
                    xi_exact(&SamplePair::new(&cols[i], &cols[j]).unwrap()).unwrap();
                assert_eq!(m.at(i, j), direct);
            }
        }
        // Diagonal reported as computed: (n - 2) / (n + 1), not rescaled to 1.
        assert_eq!(m.at(0, 0), 1.0 - 3.0 * 4.0 / 24.0);
    }

    #[test]
    fn matrix_csv_round_trips_header() {
        let cols = vec![vec![1.0, 2.0, 3.0], vec![3.0, 1.0, 2.0]];
        let names = vec!["alpha".into(), "beta".into()];
        let m = correlation_matrix(&cols, &names, CorrelationKind::Pearson).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("variable,alpha,beta\n"));
        assert!(text.lines().count() == 3);
    }
}
