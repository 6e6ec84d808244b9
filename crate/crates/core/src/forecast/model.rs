//! The desk-scale forecaster: patch embedding, learnable positional
//! encodings, pre-norm encoder blocks hosting either attention kernel, and a
//! flatten-and-project head. Channel independence: every variable flows
//! through the same weights as a univariate stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{attention_forward, AttentionConfig, AttentionOutput, AttentionWeights};
use crate::error::{Error, Result};
use crate::tensor::{glorot_uniform, normal_init, Tape, Tensor};

use super::patch::{patchify, PatchConfig};

const LAYER_NORM_EPS: f64 = 1e-5;

/// Everything that determines the network topology.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub attention: AttentionConfig,
    pub patch: PatchConfig,
    pub n_blocks: usize,
    pub ff_dim: usize,
}

impl ModelConfig {
    pub fn new(
        attention: AttentionConfig,
        patch: PatchConfig,
        n_blocks: usize,
        ff_dim: usize,
    ) -> Result<Self> {
        if n_blocks == 0 || ff_dim == 0 {
            return Err(Error::Config(
                "need at least one encoder block and a positive feed-forward width".into(),
            ));
        }
        Ok(ModelConfig {
            attention,
            patch,
            n_blocks,
            ff_dim,
        })
    }

    /// Canonical one-line description; the fingerprint hashes this.
    pub fn describe(&self) -> String {
        let a = &self.attention;
        let p = &self.patch;
        format!(
            "D={} n_head={} tau={} epsilon={} kernel={} score={} rank={} sort={:?} \
             blocks={} ff={} T={} H={} P={} S={}",
            a.model_dim,
            a.n_head,
            a.tau,
            a.epsilon,
            a.kernel,
            a.score_mode,
            a.rank_mode,
            a.sort_forward,
            self.n_blocks,
            self.ff_dim,
            p.lookback,
            p.horizon,
            p.patch_len,
            p.stride
        )
    }

    /// FNV-1a hash of the canonical description, as fixed-width hex.
    pub fn fingerprint(&self) -> String {
        format!("{:016x}", fnv1a64(self.describe().as_bytes()))
    }
}

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Named parameter tensors in a fixed order (the order is the optimizer-state
/// and checkpoint layout).
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.entries.push((name.into(), tensor));
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self
            .entries
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("unknown parameter '{name}'"))
            .1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, Tensor)> {
        self.entries.iter()
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut (String, Tensor)> {
        self.entries.iter_mut()
    }

    /// Watched clones of every parameter on `tape`, same names and order.
    pub fn watch_all(&self, tape: &Tape) -> ParamSet {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), tape.watch(t)))
                .collect(),
        }
    }

    pub fn total_elements(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }
}

/// Patch-encoder forecaster with shared weights across variables.
#[derive(Debug, Clone)]
pub struct ForecastModel {
    pub cfg: ModelConfig,
    pub params: ParamSet,
}

impl ForecastModel {
    /// Initialize all weights from the seed: Glorot for projections, small
    /// Gaussian for positional encodings, identity-like layer norms.
    pub fn init(cfg: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.attention.model_dim;
        let p = cfg.patch.patch_len;
        let n = cfg.patch.patch_count();
        let h = cfg.patch.horizon;
        let f = cfg.ff_dim;

        let mut params = ParamSet::default();
        params.push("patch_embed.w", glorot_uniform(p, d, &mut rng));
        params.push("patch_embed.b", Tensor::zeros(vec![d]));
        params.push("pos", normal_init(vec![n, d], 0.02, &mut rng));
        for b in 0..cfg.n_blocks {
            params.push(format!("block{b}.attn.w_q"), glorot_uniform(d, d, &mut rng));
            params.push(format!("block{b}.attn.w_k"), glorot_uniform(d, d, &mut rng));
            params.push(format!("block{b}.attn.w_v"), glorot_uniform(d, d, &mut rng));
            params.push(format!("block{b}.attn.w_o"), glorot_uniform(d, d, &mut rng));
            params.push(format!("block{b}.ln1.g"), Tensor::from_vec(vec![d], vec![1.0; d]).unwrap());
            params.push(format!("block{b}.ln1.b"), Tensor::zeros(vec![d]));
            params.push(format!("block{b}.ff1.w"), glorot_uniform(d, f, &mut rng));
            params.push(format!("block{b}.ff1.b"), Tensor::zeros(vec![f]));
            params.push(format!("block{b}.ff2.w"), glorot_uniform(f, d, &mut rng));
            params.push(format!("block{b}.ff2.b"), Tensor::zeros(vec![d]));
            params.push(format!("block{b}.ln2.g"), Tensor::from_vec(vec![d], vec![1.0; d]).unwrap());
            params.push(format!("block{b}.ln2.b"), Tensor::zeros(vec![d]));
        }
        params.push("head.ln.g", Tensor::from_vec(vec![d], vec![1.0; d]).unwrap());
        params.push("head.ln.b", Tensor::zeros(vec![d]));
        params.push("head.w", glorot_uniform(n * d, h, &mut rng));
        params.push("head.b", Tensor::zeros(vec![h]));
        ForecastModel { cfg, params }
    }

    /// Forecast one normalized univariate window using the given parameter
    /// set (plain for inference, watched for training).
    pub fn forward_window(&self, params: &ParamSet, window: &[f64]) -> Result<Tensor> {
        let (encoded, _) = self.encode(params, window, false)?;
        let n = self.cfg.patch.patch_count();
        let d = self.cfg.attention.model_dim;
        let flat = encoded.reshape(vec![1, n * d])?;
        let pred = flat
            .matmul(params.get("head.w"))?
            .add_row_broadcast(params.get("head.b"))?;
        pred.reshape(vec![self.cfg.patch.horizon])
    }

    /// Encoder stack; optionally collects per-block attention diagnostics.
    fn encode(
        &self,
        params: &ParamSet,
        window: &[f64],
        collect: bool,
    ) -> Result<(Tensor, Vec<AttentionOutput>)> {
        let patches = patchify(window, &self.cfg.patch)?;
        let mut x = patches
            .matmul(params.get("patch_embed.w"))?
            .add_row_broadcast(params.get("patch_embed.b"))?
            .add(params.get("pos"))?;
        let mut diagnostics = Vec::new();
        for b in 0..self.cfg.n_blocks {
            let pre = |suffix: &str| format!("block{b}.{suffix}");
            let normed = x.layer_norm(
                params.get(&pre("ln1.g")),
                params.get(&pre("ln1.b")),
                LAYER_NORM_EPS,
            )?;
            let attn_out = attention_forward(
                &normed,
                &AttentionWeights {
                    w_q: params.get(&pre("attn.w_q")).clone(),
                    w_k: params.get(&pre("attn.w_k")).clone(),
                    w_v: params.get(&pre("attn.w_v")).clone(),
                    w_o: params.get(&pre("attn.w_o")).clone(),
                },
                &self.cfg.attention,
            )?;
            x = x.add(&attn_out.output)?;
            if collect {
                diagnostics.push(attn_out);
            }
            let normed = x.layer_norm(
                params.get(&pre("ln2.g")),
                params.get(&pre("ln2.b")),
                LAYER_NORM_EPS,
            )?;
            let hidden = normed
                .matmul(params.get(&pre("ff1.w")))?
                .add_row_broadcast(params.get(&pre("ff1.b")))?
                .relu()?;
            let ff = hidden
                .matmul(params.get(&pre("ff2.w")))?
                .add_row_broadcast(params.get(&pre("ff2.b")))?;
            x = x.add(&ff)?;
        }
        let out = x.layer_norm(
            params.get("head.ln.g"),
            params.get("head.ln.b"),
            LAYER_NORM_EPS,
        )?;
        Ok((out, diagnostics))
    }

    /// Per-block attention scores and weights for one window, for export.
    pub fn attention_diagnostics(&self, window: &[f64]) -> Result<Vec<AttentionOutput>> {
        let (_, diags) = self.encode(&self.params, window, true)?;
        Ok(diags)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::AttentionKernel;

    fn tiny_cfg(kernel: AttentionKernel) -> ModelConfig {
        let attention = AttentionConfig::new(8, 2).unwrap().with_kernel(kernel);
        let patch = PatchConfig::new(16, 4, 8, 4).unwrap();
        ModelConfig::new(attention, patch, 1, 16).unwrap()
    }

    #[test]
    fn forward_produces_horizon_length_output() {
        for kernel in [AttentionKernel::Xicor, AttentionKernel::DotProduct] {
            let model = ForecastModel::init(tiny_cfg(kernel), 1);
            let window: Vec<f64> = (0..16).map(|t| (t as f64 * 0.3).sin()).collect();
            let pred = model.forward_window(&model.params, &window).unwrap();
            assert_eq!(pred.shape(), &[4]);
            assert!(pred.data().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn kernel_swap_changes_no_shapes() {
        // Drop-in contract: identical parameter shapes for both kernels.
        let xi = ForecastModel::init(tiny_cfg(AttentionKernel::Xicor), 5);
        let dot = ForecastModel::init(tiny_cfg(AttentionKernel::DotProduct), 5);
        assert_eq!(xi.params.len(), dot.params.len());
        for ((name_a, a), (name_b, b)) in xi.params.iter().zip(dot.params.iter()) {
            assert_eq!(name_a, name_b);
            assert_eq!(a.shape(), b.shape());
        }
    }

    #[test]
    fn same_seed_same_forward_bitwise() {
        let model_a = ForecastModel::init(tiny_cfg(AttentionKernel::Xicor), 9);
        let model_b = ForecastModel::init(tiny_cfg(AttentionKernel::Xicor), 9);
        let window: Vec<f64> = (0..16).map(|t| ((t * t) as f64).cos()).collect();
        let a = model_a.forward_window(&model_a.params, &window).unwrap();
        let b = model_b.forward_window(&model_b.params, &window).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn fingerprint_separates_configs() {
        let a = tiny_cfg(AttentionKernel::Xicor);
        let b = tiny_cfg(AttentionKernel::DotProduct);
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), tiny_cfg(AttentionKernel::Xicor).fingerprint());
    }

    #[test]
    fn diagnostics_expose_per_block_scores() {
        let model = ForecastModel::init(tiny_cfg(AttentionKernel::Xicor), 2);
        let window: Vec<f64> = (0..16).map(|t| (t as f64).sqrt()).collect();
        let diags = model.attention_diagnostics(&window).unwrap();
        assert_eq!(diags.len(), 1);
        let n = model.cfg.patch.patch_count();
        assert_eq!(diags[0].scores.len(), 2);
        assert_eq!(diags[0].scores[0].shape(), &[n, n]);
    }
}
