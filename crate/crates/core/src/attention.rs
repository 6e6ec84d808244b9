//! Attention whose query-key scores are differentiable Chatterjee xi values,
//! composed from the soft sorting and ranking kernels, plus baseline scaled
//! dot-product attention for comparison.
//!
//! For a query row `q` and key row `k` of head dimension `d`, the score is
//! `xi(q, k) = 1 - 3 * sum_l |r_{l+1} - r_l| / (d^2 - 1)` where `k` is first
//! rearranged by the ascending order of `q` (straight-through) and `r` are
//! its soft descending ranks. The head dimension doubles as the sample size
//! of the coefficient.

use crate::error::{Error, Result};
use crate::rank::{soft_rank_mode, RankMode};
use crate::sort::{apply_soft_permutation, soft_sort, SoftPermutation, SortForward};
use crate::tensor::{concat_cols, concat_flat, straight_through, GradCheckReport, Tensor};

/// Which similarity the attention scores use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AttentionKernel {
    #[default]
    Xicor,
    DotProduct,
}

impl std::fmt::Display for AttentionKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AttentionKernel::Xicor => write!(f, "xicor"),
            AttentionKernel::DotProduct => write!(f, "dot_product"),
        }
    }
}

/// How raw xi scores are turned into attention weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreMode {
    /// Row-wise softmax over scores: weights stay a convex combination and
    /// negative xi values are handled gracefully.
    #[default]
    SoftmaxXi,
    /// Ablation: clamp negative scores to zero and L1-normalize each row.
    RawXiRowNorm,
}

impl std::fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScoreMode::SoftmaxXi => write!(f, "softmax_xi"),
            ScoreMode::RawXiRowNorm => write!(f, "raw_xi_rownorm"),
        }
    }
}

/// Multi-head attention configuration.
#[derive(Debug, Clone)]
pub struct AttentionConfig {
    pub model_dim: usize,
    pub n_head: usize,
    pub tau: f64,
    pub epsilon: f64,
    pub score_mode: ScoreMode,
    pub kernel: AttentionKernel,
    pub rank_mode: RankMode,
    /// Forward behavior of the sort step; finite-difference checks use the
    /// fully relaxed mode.
    pub sort_forward: SortForward,
}

impl AttentionConfig {
    /// Validates divisibility and the minimum head dimension (`d >= 3`, since
    /// the xi denominator is `d^2 - 1` and ranks need room to differ).
    pub fn new(model_dim: usize, n_head: usize) -> Result<Self> {
        if n_head == 0 || model_dim % n_head != 0 {
            return Err(Error::Config(format!(
                "model_dim {model_dim} is not divisible by n_head {n_head}"
            )));
        }
        let head_dim = model_dim / n_head;
        if head_dim < 3 {
            return Err(Error::Config(format!(
                "head dimension {head_dim} is too small; need at least 3"
            )));
        }
        Ok(AttentionConfig {
            model_dim,
            n_head,
            tau: 1.0,
            epsilon: 0.1,
            score_mode: ScoreMode::SoftmaxXi,
            kernel: AttentionKernel::Xicor,
            rank_mode: RankMode::Soft,
            sort_forward: SortForward::HardST,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.n_head
    }

    pub fn with_kernel(mut self, kernel: AttentionKernel) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::Parameter {
                name: "tau",
                requirement: "positive",
                value: tau,
            });
        }
        self.tau = tau;
        Ok(self)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::Parameter {
                name: "epsilon",
                requirement: "positive",
                value: epsilon,
            });
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    pub fn with_score_mode(mut self, mode: ScoreMode) -> Self {
        self.score_mode = mode;
        self
    }

    pub fn with_rank_mode(mut self, mode: RankMode) -> Self {
        self.rank_mode = mode;
        self
    }

    pub fn with_sort_forward(mut self, mode: SortForward) -> Self {
        self.sort_forward = mode;
        self
    }
}

/// Learnable projections of one attention layer (no biases, matching the
/// plain affine formulation).
#[derive(Debug, Clone)]
pub struct AttentionWeights {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub w_o: Tensor,
}

impl AttentionWeights {
    pub fn init(model_dim: usize, rng: &mut impl rand::Rng) -> Self {
        AttentionWeights {
            w_q: crate::tensor::glorot_uniform(model_dim, model_dim, rng),
            w_k: crate::tensor::glorot_uniform(model_dim, model_dim, rng),
            w_v: crate::tensor::glorot_uniform(model_dim, model_dim, rng),
            w_o: crate::tensor::glorot_uniform(model_dim, model_dim, rng),
        }
    }
}

/// Output of one attention layer plus per-head score and weight matrices.
#[derive(Debug, Clone)]
pub struct AttentionOutput {
    /// `L x D`.
    pub output: Tensor,
    /// Per head: `L x L` pre-normalization scores (xi or scaled dot).
    pub scores: Vec<Tensor>,
    /// Per head: `L x L` post-normalization attention weights.
    pub weights: Vec<Tensor>,
}

/// Extract row `i` of a 2-D tensor as a 1-D tensor (differentiable).
fn row(t: &Tensor, i: usize) -> Result<Tensor> {
    let (m, n) = (t.shape()[0], t.shape()[1]);
    let indices: Vec<usize> = (i * n..(i + 1) * n).collect();
    t.reshape(vec![m * n])?.gather(&indices)
}

/// xi from keys already rearranged by the query's ascending order:
/// soft descending ranks, adjacent jumps, `1 - 3 * sum / (d^2 - 1)`.
fn xi_from_sorted_keys(k_sorted: &Tensor, epsilon: f64, rank_mode: RankMode) -> Result<Tensor> {
    let d = k_sorted.numel();
    let ranks = soft_rank_mode(k_sorted, epsilon, rank_mode)?;
    let lead: Vec<usize> = (1..d).collect();
    let lag: Vec<usize> = (0..d - 1).collect();
    let jump_sum = ranks
        .gather(&lead)?
        .sub(&ranks.gather(&lag)?)?
        .abs()?
        .sum()?;
    jump_sum
        .scale(-3.0 / ((d * d - 1) as f64))?
        .add_scalar(1.0)
}

/// xi of one (query, key) pair given the prepared sort structure of `-q`.
fn xi_from_sort(
    sort: &SoftPermutation,
    k: &Tensor,
    epsilon: f64,
    rank_mode: RankMode,
    sort_forward: SortForward,
) -> Result<Tensor> {
    let k_sorted = apply_soft_permutation(sort, k, sort_forward)?;
    xi_from_sorted_keys(&k_sorted, epsilon, rank_mode)
}

/// Differentiable Chatterjee xi between a query and a key vector.
///
/// `k` is rearranged by the ascending order of `q` (straight-through by
/// default), soft descending ranks are taken, and the adjacent-rank-jump
/// formula is applied. Fully on the gradient tape when the inputs are.
pub fn xi_soft(q: &Tensor, k: &Tensor, cfg: &AttentionConfig) -> Result<Tensor> {
    if q.shape() != k.shape() || q.shape().len() != 1 {
        return Err(Error::ShapeMismatch {
            op: "xi_soft",
            lhs: q.shape().to_vec(),
            rhs: k.shape().to_vec(),
        });
    }
    if q.numel() < 3 {
        return Err(Error::Config(format!(
            "xi needs at least 3 coordinates, got {}",
            q.numel()
        )));
    }
    let sort = soft_sort(&q.neg()?, cfg.tau)?;
    xi_from_sort(&sort, k, cfg.epsilon, cfg.rank_mode, cfg.sort_forward)
}

/// `L x L` score matrix with `S[i, j] = xi_soft(q_i, k_j)`.
///
/// The sort structure of each query row is computed once and reused across
/// all keys, which is output-identical to the naive per-pair loop.
pub fn score_matrix(q: &Tensor, k: &Tensor, cfg: &AttentionConfig) -> Result<Tensor> {
    let (lq, d) = match q.shape() {
        [l, d] => (*l, *d),
        _ => {
            return Err(Error::BadShape {
                op: "score_matrix",
                shape: q.shape().to_vec(),
                detail: "expected a 2-D query tensor".into(),
            })
        }
    };
    if k.shape().len() != 2 || k.shape()[1] != d {
        return Err(Error::Config(format!(
            "score_matrix: query dim {:?} does not match key dim {:?}",
            q.shape(),
            k.shape()
        )));
    }
    if d < 3 {
        return Err(Error::Config(format!(
            "xi needs head dimension of at least 3, got {d}"
        )));
    }
    let lk = k.shape()[0];
    // Off-tape straight-through forwards need no soft products at all.
    let skip_soft = cfg.sort_forward == SortForward::HardST
        && q.is_constant()
        && k.is_constant();
    let kt = if skip_soft { None } else { Some(k.transpose()?) };
    let mut entries = Vec::with_capacity(lq * lk);
    for i in 0..lq {
        let q_i = row(q, i)?;
        let sort = soft_sort(&q_i.neg()?, cfg.tau)?;
        // One matmul rearranges every key against this query's soft order;
        // column j accumulates in the same order as the per-pair product, so
        // results are bit-identical to looping xi_soft.
        let soft_sorted = match &kt {
            Some(kt) => Some(sort.soft.matmul(kt)?.reshape(vec![d * lk])?),
            None => None,
        };
        for j in 0..lk {
            let k_sorted = match (&soft_sorted, cfg.sort_forward) {
                (Some(flat), SortForward::Soft) => {
                    let col: Vec<usize> = (0..d).map(|r| r * lk + j).collect();
                    flat.gather(&col)?
                }
                (Some(flat), SortForward::HardST) => {
                    let col: Vec<usize> = (0..d).map(|r| r * lk + j).collect();
                    let soft_col = flat.gather(&col)?;
                    let key_row: Vec<f64> = (0..d).map(|c| k.at(j, c)).collect();
                    straight_through(&soft_col, sort.hard.apply(&key_row))?
                }
                (None, _) => {
                    let key_row: Vec<f64> = (0..d).map(|c| k.at(j, c)).collect();
                    Tensor::vector(&sort.hard.apply(&key_row))
                }
            };
            entries.push(xi_from_sorted_keys(&k_sorted, cfg.epsilon, cfg.rank_mode)?);
        }
    }
    concat_flat(&entries, vec![lq, lk])
}

/// Multi-head attention forward pass over `x: L x D`.
///
/// Per head the scores are either xi values or `Q Kᵀ / sqrt(d)`; weights are
/// produced per `cfg.score_mode`, applied to the values, concatenated across
/// heads, and projected by `w_o`.
pub fn attention_forward(
    x: &Tensor,
    weights: &AttentionWeights,
    cfg: &AttentionConfig,
) -> Result<AttentionOutput> {
    let (_, dim) = match x.shape() {
        [l, dm] => (*l, *dm),
        _ => {
            return Err(Error::BadShape {
                op: "attention_forward",
                shape: x.shape().to_vec(),
                detail: "expected a 2-D input".into(),
            })
        }
    };
    if dim != cfg.model_dim {
        return Err(Error::Config(format!(
            "input dim {dim} does not match model_dim {}",
            cfg.model_dim
        )));
    }
    for (name, w) in [
        ("w_q", &weights.w_q),
        ("w_k", &weights.w_k),
        ("w_v", &weights.w_v),
        ("w_o", &weights.w_o),
    ] {
        if w.shape() != [dim, dim] {
            return Err(Error::Config(format!(
                "{name} has shape {:?}, expected [{dim}, {dim}]",
                w.shape()
            )));
        }
    }
    let d = cfg.head_dim();
    let q = x.matmul(&weights.w_q)?;
    let k = x.matmul(&weights.w_k)?;
    let v = x.matmul(&weights.w_v)?;

    let mut scores = Vec::with_capacity(cfg.n_head);
    let mut attn = Vec::with_capacity(cfg.n_head);
    let mut heads = Vec::with_capacity(cfg.n_head);
    for h in 0..cfg.n_head {
        let (lo, hi) = (h * d, (h + 1) * d);
        let q_h = q.slice_cols(lo, hi)?;
        let k_h = k.slice_cols(lo, hi)?;
        let v_h = v.slice_cols(lo, hi)?;
        let s_h = match cfg.kernel {
            AttentionKernel::Xicor => score_matrix(&q_h, &k_h, cfg)?,
            AttentionKernel::DotProduct => q_h
                .matmul(&k_h.transpose()?)?
                .scale(1.0 / (d as f64).sqrt())?,
        };
        let w_h = match (cfg.kernel, cfg.score_mode) {
            (AttentionKernel::DotProduct, _) | (_, ScoreMode::SoftmaxXi) => s_h.row_softmax()?,
            (_, ScoreMode::RawXiRowNorm) => s_h.relu()?.row_l1_normalize(1e-12)?,
        };
        heads.push(w_h.matmul(&v_h)?);
        scores.push(s_h);
        attn.push(w_h);
    }
    let output = concat_cols(&heads)?.matmul(&weights.w_o)?;
    Ok(AttentionOutput {
        output,
        scores,
        weights: attn,
    })
}

/// Compare analytic gradients of a scalar loss through [`attention_forward`]
/// against central finite differences, per projection matrix.
///
/// For the xicor kernel both sides are evaluated on the fully relaxed soft
/// path; the straight-through estimator intentionally mismatches hard forward
/// values with soft gradients, so the soft path is what is checkable.
pub fn grad_check_attention(cfg: &AttentionConfig, seed: u64) -> Result<GradCheckReport> {
    use rand::Rng;
    let mut cfg = cfg.clone();
    if cfg.kernel == AttentionKernel::Xicor {
        cfg.sort_forward = SortForward::Soft;
        cfg.rank_mode = RankMode::Soft;
    }
    let seq_len = 4;
    let dim = cfg.model_dim;
    let tolerance = match cfg.kernel {
        AttentionKernel::DotProduct => 1e-6,
        AttentionKernel::Xicor => 1e-3,
    };

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    use rand::SeedableRng;
    let x = Tensor::from_vec(
        vec![seq_len, dim],
        (0..seq_len * dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )?;
    let weights = AttentionWeights::init(dim, &mut rng);
    // Random mixing coefficients make the scalar loss sensitive to every
    // output coordinate.
    let mix: Vec<f64> = (0..seq_len * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mix_t = Tensor::from_vec(vec![seq_len, dim], mix)?;

    let loss_given = |w_q: &Tensor, w_k: &Tensor, w_v: &Tensor, w_o: &Tensor| -> Result<Tensor> {
        let out = attention_forward(
            &x,
            &AttentionWeights {
                w_q: w_q.clone(),
                w_k: w_k.clone(),
                w_v: w_v.clone(),
                w_o: w_o.clone(),
            },
            &cfg,
        )?;
        out.output.mul(&mix_t)?.sum()
    };

    let tape = crate::tensor::Tape::new();
    let wq = tape.watch(&weights.w_q);
    let wk = tape.watch(&weights.w_k);
    let wv = tape.watch(&weights.w_v);
    let wo = tape.watch(&weights.w_o);
    let loss = loss_given(&wq, &wk, &wv, &wo)?;
    let grads = loss.backward()?;

    let mut report = GradCheckReport::default();
    for (name, param, idx) in [
        ("w_q", &weights.w_q, 0usize),
        ("w_k", &weights.w_k, 1),
        ("w_v", &weights.w_v, 2),
        ("w_o", &weights.w_o, 3),
    ] {
        let analytic = grads
            .get(match idx {
                0 => &wq,
                1 => &wk,
                2 => &wv,
                _ => &wo,
            })
            .expect("watched parameter has a gradient");
        let numeric = crate::tensor::finite_diff_gradient(
            |probe| {
                let probe_t = Tensor::from_vec(vec![dim, dim], probe.to_vec()).unwrap();
                let ws = [&weights.w_q, &weights.w_k, &weights.w_v, &weights.w_o];
                let pick = |i: usize| if i == idx { &probe_t } else { ws[i] };
                loss_given(pick(0), pick(1), pick(2), pick(3))
                    .unwrap()
                    .item()
                    .unwrap()
            },
            param.data(),
            1e-5,
        );
        report.push(
            format!("attention[{}] d{}/{}", cfg.kernel, cfg.head_dim(), name),
            crate::tensor::max_rel_error(analytic.data(), &numeric),
            tolerance,
        );
    }
    Ok(report)
}
