//! The harness configuration file: flat `key = value` TOML covering every
//! attention, patching, and training field. CLI flags override file values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attention::{AttentionConfig, AttentionKernel, ScoreMode};
use crate::error::{Error, Result};
use crate::rank::RankMode;
use crate::sort::SortForward;

use super::model::ModelConfig;
use super::patch::PatchConfig;
use super::train::TrainConfig;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    // Attention
    pub model_dim: usize,
    pub n_head: usize,
    pub tau: f64,
    pub epsilon: f64,
    /// "softmax_xi" or "raw_xi_rownorm".
    pub score_mode: String,
    /// "xicor" or "dot_product".
    pub kernel: String,
    /// "soft" or "hard_st".
    pub rank_mode: String,
    // Model
    pub n_blocks: usize,
    pub ff_dim: usize,
    // Patching
    pub lookback: usize,
    pub horizon: usize,
    pub patch_len: usize,
    pub stride: usize,
    // Training
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_opt: f64,
    pub seed: u64,
    pub patience: usize,
    // Splits (used when loading CSVs)
    pub train_frac: f64,
    pub valid_frac: f64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            model_dim: 128,
            n_head: 2,
            tau: 1.0,
            epsilon: 0.1,
            score_mode: "softmax_xi".into(),
            kernel: "xicor".into(),
            rank_mode: "soft".into(),
            n_blocks: 1,
            ff_dim: 256,
            lookback: 96,
            horizon: 24,
            patch_len: 16,
            stride: 8,
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_opt: 1e-8,
            seed: 7,
            patience: 20,
            train_frac: 0.6,
            valid_frac: 0.2,
        }
    }
}

impl HarnessConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat struct always serializes")
    }

    pub fn parse_kernel(&self) -> Result<AttentionKernel> {
        match self.kernel.as_str() {
            "xicor" => Ok(AttentionKernel::Xicor),
            "dot_product" | "dot-product" => Ok(AttentionKernel::DotProduct),
            other => Err(Error::Config(format!("unknown kernel '{other}'"))),
        }
    }

    pub fn parse_score_mode(&self) -> Result<ScoreMode> {
        match self.score_mode.as_str() {
            "softmax_xi" => Ok(ScoreMode::SoftmaxXi),
            "raw_xi_rownorm" => Ok(ScoreMode::RawXiRowNorm),
            other => Err(Error::Config(format!("unknown score mode '{other}'"))),
        }
    }

    pub fn parse_rank_mode(&self) -> Result<RankMode> {
        match self.rank_mode.as_str() {
            "soft" => Ok(RankMode::Soft),
            "hard_st" => Ok(RankMode::HardST),
            other => Err(Error::Config(format!("unknown rank mode '{other}'"))),
        }
    }

    pub fn attention_config(&self) -> Result<AttentionConfig> {
        Ok(AttentionConfig::new(self.model_dim, self.n_head)?
            .with_tau(self.tau)?
            .with_epsilon(self.epsilon)?
            .with_kernel(self.parse_kernel()?)
            .with_score_mode(self.parse_score_mode()?)
            .with_rank_mode(self.parse_rank_mode()?)
            .with_sort_forward(SortForward::HardST))
    }

    pub fn patch_config(&self) -> Result<PatchConfig> {
        PatchConfig::new(self.lookback, self.horizon, self.patch_len, self.stride)
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        ModelConfig::new(
            self.attention_config()?,
            self.patch_config()?,
            self.n_blocks,
            self.ff_dim,
        )
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps_opt: self.eps_opt,
            seed: self.seed,
            patience: self.patience,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn split_spec(&self) -> super::dataset::SplitSpec {
        super::dataset::SplitSpec::Fractions(self.train_frac, self.valid_frac)
    }

    /// FNV-1a hash of the canonical TOML form.
    pub fn fingerprint(&self) -> String {
        format!(
            "{:016x}",
            super::model::fnv1a64(self.to_toml_string().as_bytes())
        )
    }
}
