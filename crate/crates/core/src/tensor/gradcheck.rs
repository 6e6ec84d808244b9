//! Central finite differences for validating analytic gradients.
//!
//! The numeric side only ever calls the forward pass, so it stays independent
//! of every backward rule it is used to check.

/// Central-difference gradient of a scalar function at `x` with step `h`.
pub fn finite_diff_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe);
        probe[i] = orig - h;
        let minus = f(&probe);
        probe[i] = orig;
        grad[i] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// Relative error between analytic and numeric gradients.
///
/// Per coordinate: `|a - n| / max(|a|, |n|)` when either magnitude exceeds
/// `1e-6`, otherwise the raw absolute difference (both effectively zero).
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let scale = a.abs().max(n.abs());
            if scale > 1e-6 {
                (a - n).abs() / scale
            } else {
                (a - n).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// One named comparison in a gradient-check report.
#[derive(Debug, Clone)]
pub struct GradCheckCase {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheckCase {
    pub fn passed(&self) -> bool {
        self.max_rel_error.is_finite() && self.max_rel_error <= self.tolerance
    }
}

/// Collection of gradient-check results with an overall verdict.
#[derive(Debug, Default, Clone)]
pub struct GradCheckReport {
    pub cases: Vec<GradCheckCase>,
}

impl GradCheckReport {
    pub fn push(&mut self, name: impl Into<String>, max_rel_error: f64, tolerance: f64) {
        self.cases.push(GradCheckCase {
            name: name.into(),
            max_rel_error,
            tolerance,
        });
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        self.cases.extend(other.cases);
    }

    pub fn all_passed(&self) -> bool {
        self.cases.iter().all(GradCheckCase::passed)
    }

    pub fn worst(&self) -> Option<&GradCheckCase> {
        self.cases.iter().max_by(|a, b| {
            (a.max_rel_error / a.tolerance)
                .partial_cmp(&(b.max_rel_error / b.tolerance))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for case in &self.cases {
            writeln!(
                f,
                "{:<44} max rel err {:>12.3e}  tol {:>8.0e}  {}",
                case.name,
                case.max_rel_error,
                case.tolerance,
                if case.passed() { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}
