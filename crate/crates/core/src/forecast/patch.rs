//! Series-to-patch segmentation: `N = floor((T - P) / S) + 2` windows of
//! length `P` at stride `S`, the final window completed by replicating the
//! last value `S` times.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchConfig {
    /// Lookback window length T.
    pub lookback: usize,
    /// Forecasting horizon H.
    pub horizon: usize,
    /// Patch length P.
    pub patch_len: usize,
    /// Stride S.
    pub stride: usize,
}

impl PatchConfig {
    pub fn new(lookback: usize, horizon: usize, patch_len: usize, stride: usize) -> Result<Self> {
        if patch_len == 0 || patch_len > lookback {
            return Err(Error::Config(format!(
                "patch length {patch_len} must be in 1..={lookback}"
            )));
        }
        if stride == 0 || stride > patch_len {
            return Err(Error::Config(format!(
                "stride {stride} must be in 1..={patch_len}"
            )));
        }
        if horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        Ok(PatchConfig {
            lookback,
            horizon,
            patch_len,
            stride,
        })
    }

    /// Number of patches: `floor((T - P) / S) + 2`.
    pub fn patch_count(&self) -> usize {
        (self.lookback - self.patch_len) / self.stride + 2
    }
}

/// Segment a length-T series into an `N x P` tensor of overlapping windows
/// at offsets `0, S, 2S, ...`, padding the tail by replicating the final
/// value `S` times.
pub fn patchify(series: &[f64], cfg: &PatchConfig) -> Result<Tensor> {
    if series.len() != cfg.lookback {
        return Err(Error::Config(format!(
            "series length {} does not match lookback {}",
            series.len(),
            cfg.lookback
        )));
    }
    let n = cfg.patch_count();
    let p = cfg.patch_len;
    let mut padded = Vec::with_capacity(series.len() + cfg.stride);
    padded.extend_from_slice(series);
    padded.resize(series.len() + cfg.stride, *series.last().unwrap());
    let mut data = Vec::with_capacity(n * p);
    for w in 0..n {
        let start = w * cfg.stride;
        data.extend_from_slice(&padded[start..start + p]);
    }
    Tensor::from_vec(vec![n, p], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_setting_gives_twelve_patches() {
        let cfg = PatchConfig::new(96, 24, 16, 8).unwrap();
        assert_eq!(cfg.patch_count(), (96 - 16) / 8 + 2);
        assert_eq!(cfg.patch_count(), 12);
        let series: Vec<f64> = (0..96).map(f64::from).collect();
        let t = patchify(&series, &cfg).unwrap();
        assert_eq!(t.shape(), &[12, 16]);
    }

    #[test]
    fn degenerate_single_patch_case() {
        // P = S = T: two rows, the second entirely replicated padding.
        let cfg = PatchConfig::new(8, 1, 8, 8).unwrap();
        assert_eq!(cfg.patch_count(), 2);
        let series: Vec<f64> = (1..=8).map(f64::from).collect();
        let t = patchify(&series, &cfg).unwrap();
        assert_eq!(&t.data()[..8], series.as_slice());
        assert!(t.data()[8..].iter().all(|&v| v == 8.0));
    }

    #[test]
    fn non_overlapping_patches_reconstruct_prefix() {
        let cfg = PatchConfig::new(64, 4, 8, 8).unwrap();
        let series: Vec<f64> = (0..64).map(|t| (t as f64).sin()).collect();
        let t = patchify(&series, &cfg).unwrap();
        let n = cfg.patch_count();
        // Concatenating all but the padded final row reproduces the series.
        let rebuilt: Vec<f64> = t.data()[..(n - 1) * 8].to_vec();
        assert_eq!(rebuilt, series[..(n - 1) * 8].to_vec());
    }

    #[test]
    fn every_input_index_is_covered() {
        for (t_len, p, s) in [(96usize, 16usize, 8usize), (96, 16, 16), (50, 7, 3), (31, 9, 5)] {
            let cfg = PatchConfig::new(t_len, 1, p, s).unwrap();
            // Values equal their index, so patch contents witness coverage.
            let series: Vec<f64> = (0..t_len).map(|t| t as f64).collect();
            let patches = patchify(&series, &cfg).unwrap();
            let mut covered = vec![false; t_len];
            for w in 0..cfg.patch_count() {
                for offset in 0..p {
                    let idx = w * s + offset;
                    if idx < t_len {
                        assert_eq!(patches.at(w, offset), idx as f64);
                        covered[idx] = true;
                    }
                }
            }
            assert!(covered.iter().all(|&c| c), "T={t_len} P={p} S={s}");
        }
    }

    #[test]
    fn rejects_invalid_geometry() {
        assert!(PatchConfig::new(10, 4, 16, 8).is_err()); // P > T
        assert!(PatchConfig::new(96, 24, 16, 32).is_err()); // S > P
        assert!(PatchConfig::new(96, 0, 16, 8).is_err());
        let cfg = PatchConfig::new(96, 24, 16, 8).unwrap();
        assert!(patchify(&[0.0; 95], &cfg).is_err());
    }
}
