//! Differentiable ranking as regularized projection onto the permutahedron,
//! reduced to isotonic regression solved by Pool-Adjacent-Violators.
//!
//! Soft descending ranks of `k` at regularization strength `epsilon` are
//! `r = theta - v(s - rho)` mapped back through the sorting permutation,
//! where `theta = -k/epsilon`, `s` is `theta` sorted descending,
//! `rho = (n, ..., 1)`, and `v` is the non-increasing isotonic projection.
//! We evaluate the algebraically identical per-block form
//! `r_i = mean_{q in B}( (k_sigma(q) - k_i) / epsilon ) + mean(rho_B)`,
//! which keeps ranks at O(n) magnitude for any epsilon and makes uniform
//! input shifts cancel exactly. The backward rule distributes gradient
//! uniformly within each pooled block and runs in O(n).

use crate::error::{Error, Result};
use crate::sort::{argsort_ascending, argsort_descending};
use crate::tensor::{custom_grad, Tensor};

/// One pooled block of an isotonic solution: positions `[start, end)` share
/// the mean of the corresponding input entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PavBlock {
    pub start: usize,
    pub end: usize,
    pub mean: f64,
}

impl PavBlock {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Solution of `argmin ||v - w||^2 / 2` over non-increasing `v`.
#[derive(Debug, Clone)]
pub struct IsotonicSolution {
    /// Non-increasing projection of the input.
    pub values: Vec<f64>,
    /// Pooling structure; blocks partition `0..n` in order.
    pub blocks: Vec<PavBlock>,
}

/// Pool-Adjacent-Violators for the non-increasing constraint, O(n).
///
/// Adjacent blocks are compared through cross-multiplied sums rather than
/// divided means, so pooling decisions do not depend on division rounding.
pub fn isotonic_regression(w: &[f64]) -> IsotonicSolution {
    let n = w.len();
    // (start, sum, len) per active block.
    let mut starts: Vec<usize> = Vec::with_capacity(n);
    let mut sums: Vec<f64> = Vec::with_capacity(n);
    let mut lens: Vec<usize> = Vec::with_capacity(n);
    for (i, &wi) in w.iter().enumerate() {
        starts.push(i);
        sums.push(wi);
        lens.push(1);
        // Merge while the previous block's mean does not exceed this one's:
        // mean_prev <= mean_cur  <=>  sum_prev * len_cur <= sum_cur * len_prev.
        while starts.len() > 1 {
            let m = starts.len();
            if sums[m - 2] * lens[m - 1] as f64 <= sums[m - 1] * lens[m - 2] as f64 {
                sums[m - 2] += sums[m - 1];
                lens[m - 2] += lens[m - 1];
                starts.pop();
                sums.pop();
                lens.pop();
            } else {
                break;
            }
        }
    }
    let mut values = vec![0.0; n];
    let mut blocks = Vec::with_capacity(starts.len());
    for b in 0..starts.len() {
        let start = starts[b];
        let end = start + lens[b];
        let mean = sums[b] / lens[b] as f64;
        values[start..end].fill(mean);
        blocks.push(PavBlock { start, end, mean });
    }
    IsotonicSolution { values, blocks }
}

/// Pooling structure of a soft-rank forward pass, consumed by
/// [`soft_rank_backward`].
#[derive(Debug, Clone)]
pub struct SoftRankBlocks {
    epsilon: f64,
    /// Ascending argsort of `k` (equivalently descending argsort of `-k/eps`).
    sigma: Vec<usize>,
    /// Sorted position of each original index: `position[sigma[p]] == p`.
    position: Vec<usize>,
    /// Half-open `[start, end)` block bounds over sorted positions.
    bounds: Vec<(usize, usize)>,
}

impl SoftRankBlocks {
    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn num_blocks(&self) -> usize {
        self.bounds.len()
    }
}

/// Forward soft ranks plus the pooling record needed for the backward pass.
pub fn soft_rank_with_blocks(k: &[f64], epsilon: f64) -> Result<(Vec<f64>, SoftRankBlocks)> {
    if !(epsilon > 0.0) {
        return Err(Error::Parameter {
            name: "epsilon",
            requirement: "positive",
            value: epsilon,
        });
    }
    let n = k.len();
    let sigma = argsort_ascending(k);
    let position = sigma.inverse();

    // w_p = -k_sigma(p)/eps - rho_p with rho = (n, n-1, ..., 1).
    let w: Vec<f64> = sigma
        .indices()
        .iter()
        .enumerate()
        .map(|(p, &i)| -k[i] / epsilon - (n - p) as f64)
        .collect();
    let iso = isotonic_regression(&w);

    // Per-block sums of k in sorted order.
    let mut values = vec![0.0; n];
    let mut bounds = Vec::with_capacity(iso.blocks.len());
    for block in &iso.blocks {
        bounds.push((block.start, block.end));
        let m = block.len() as f64;
        let sum_k: f64 = sigma.indices()[block.start..block.end]
            .iter()
            .map(|&i| k[i])
            .sum();
        // rho over the block is a run of consecutive integers.
        let rho_mean = ((n - block.start) as f64 + (n - (block.end - 1)) as f64) / 2.0;
        for p in block.start..block.end {
            let i = sigma.indices()[p];
            values[i] = (sum_k - m * k[i]) / (m * epsilon) + rho_mean;
        }
    }
    Ok((
        values,
        SoftRankBlocks {
            epsilon,
            sigma: sigma.indices().to_vec(),
            position: position.indices().to_vec(),
            bounds,
        },
    ))
}

/// Exact Jacobian-vector product of `soft_rank`: the `-1/epsilon` direct term
/// combined with block-uniform averaging, re-indexed through the sorting
/// permutation. O(n).
pub fn soft_rank_backward(upstream: &[f64], blocks: &SoftRankBlocks) -> Result<Vec<f64>> {
    let n = blocks.len();
    if upstream.len() != n {
        return Err(Error::Contract(format!(
            "soft_rank_backward: upstream length {} does not match forward length {n}",
            upstream.len()
        )));
    }
    // Block averages of the upstream gradient in sorted coordinates.
    let mut avg = vec![0.0; n];
    for &(start, end) in &blocks.bounds {
        let sum: f64 = blocks.sigma[start..end].iter().map(|&i| upstream[i]).sum();
        let mean = sum / (end - start) as f64;
        avg[start..end].fill(mean);
    }
    Ok((0..n)
        .map(|j| (avg[blocks.position[j]] - upstream[j]) / blocks.epsilon)
        .collect())
}

/// How the forward value of the rank step is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankMode {
    /// Fully soft ranks forward and backward (default).
    #[default]
    Soft,
    /// Exact descending ranks forward, soft gradient backward.
    HardST,
}

impl std::fmt::Display for RankMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RankMode::Soft => write!(f, "soft"),
            RankMode::HardST => write!(f, "hard_st"),
        }
    }
}

/// Differentiable descending ranks of a 1-D tensor: the largest entry tends
/// to rank 1. Registered on the tape with the block-averaging Jacobian.
pub fn soft_rank(k: &Tensor, epsilon: f64) -> Result<Tensor> {
    soft_rank_mode(k, epsilon, RankMode::Soft)
}

pub fn soft_rank_mode(k: &Tensor, epsilon: f64, mode: RankMode) -> Result<Tensor> {
    if k.shape().len() != 1 {
        return Err(Error::BadShape {
            op: "soft_rank",
            shape: k.shape().to_vec(),
            detail: "expected a 1-D tensor".into(),
        });
    }
    let (values, blocks) = soft_rank_with_blocks(k.data(), epsilon)?;
    let forward = match mode {
        RankMode::Soft => values,
        RankMode::HardST => exact_ranks_descending(k.data()),
    };
    let value = Tensor::from_vec(vec![k.numel()], forward)?;
    custom_grad(&[k], value, move |u| {
        vec![soft_rank_backward(u, &blocks).expect("upstream shape checked by tape")]
    })
}

/// Exact descending ranks as floats: largest value gets 1.0; ties broken by
/// original index.
pub fn exact_ranks_descending(values: &[f64]) -> Vec<f64> {
    let order = argsort_descending(values);
    let mut ranks = vec![0.0; values.len()];
    for (pos, &i) in order.indices().iter().enumerate() {
        ranks[i] = (pos + 1) as f64;
    }
    ranks
}

/// Exact ascending ranks as floats: smallest value gets 1.0.
pub fn exact_ranks_ascending(values: &[f64]) -> Vec<f64> {
    crate::stats::ranks_ascending(values)
        .into_iter()
        .map(|r| r as f64)
        .collect()
}

/// Which convention a rank vector follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankConvention {
    DescendingSoft,
    AscendingExact,
}

/// Exact or soft ranks of a vector under a declared convention.
#[derive(Debug, Clone)]
pub struct RankVector {
    pub values: Vec<f64>,
    pub convention: RankConvention,
    /// Regularization strength; only present for soft ranks.
    pub epsilon: Option<f64>,
}

impl RankVector {
    pub fn soft(k: &[f64], epsilon: f64) -> Result<Self> {
        let (values, _) = soft_rank_with_blocks(k, epsilon)?;
        Ok(RankVector {
            values,
            convention: RankConvention::DescendingSoft,
            epsilon: Some(epsilon),
        })
    }

    pub fn exact_ascending(v: &[f64]) -> Self {
        RankVector {
            values: exact_ranks_ascending(v),
            convention: RankConvention::AscendingExact,
            epsilon: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{finite_diff_gradient, max_rel_error, Tape};
    use rand::Rng;

    #[test]
    fn feasible_input_is_its_own_projection() {
        let iso = isotonic_regression(&[3.0, 2.0, 1.0]);
        assert_eq!(iso.values, vec![3.0, 2.0, 1.0]);
        assert_eq!(iso.blocks.len(), 3);
        assert!(iso.blocks.iter().all(|b| b.len() == 1));
    }

    #[test]
    fn violating_pair_pools_to_its_mean() {
        let iso = isotonic_regression(&[0.0, 1.0]);
        assert_eq!(iso.values, vec![0.5, 0.5]);
        assert_eq!(iso.blocks, vec![PavBlock { start: 0, end: 2, mean: 0.5 }]);
    }

    #[test]
    fn blocks_partition_and_values_non_increasing() {
        let mut rng = crate::test_rng(3);
        for _ in 0..50 {
            let n = rng.gen_range(1..40);
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let iso = isotonic_regression(&w);
            let mut cursor = 0;
            for b in &iso.blocks {
                assert_eq!(b.start, cursor);
                cursor = b.end;
                for p in b.start..b.end {
                    assert_eq!(iso.values[p], b.mean);
                }
            }
            assert_eq!(cursor, n);
            for pair in iso.values.windows(2) {
                assert!(pair[0] >= pair[1] - 1e-12);
            }
            // Block means strictly decrease (KKT of the pooled solution).
            for pair in iso.blocks.windows(2) {
                assert!(pair[0].mean > pair[1].mean);
            }
        }
    }

    #[test]
    fn soft_rank_small_epsilon_recovers_exact_ranks() {
        let (r, _) = soft_rank_with_blocks(&[3.0, 1.0, 2.0], 1e-3).unwrap();
        for (got, want) in r.iter().zip([1.0, 3.0, 2.0]) {
            assert!((got - want).abs() <= 1e-6, "{r:?}");
        }
    }

    #[test]
    fn tied_input_pools_to_mean_rank() {
        for n in [2usize, 5, 8] {
            let k = vec![0.7; n];
            let (r, blocks) = soft_rank_with_blocks(&k, 0.3).unwrap();
            assert_eq!(blocks.num_blocks(), 1);
            for v in r {
                assert_eq!(v, (n as f64 + 1.0) / 2.0);
            }
        }
    }

    #[test]
    fn rank_sum_stays_on_permutahedron_hull() {
        let mut rng = crate::test_rng(4);
        for _ in 0..100 {
            let n = rng.gen_range(2..30);
            let k: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
            for eps in [1e-4, 0.1, 1.0, 10.0] {
                let (r, _) = soft_rank_with_blocks(&k, eps).unwrap();
                let sum: f64 = r.iter().sum();
                let expect = (n * (n + 1)) as f64 / 2.0;
                assert!((sum - expect).abs() <= 1e-6, "n={n} eps={eps}: {sum}");
            }
        }
    }

    #[test]
    fn rejects_non_positive_epsilon() {
        assert!(matches!(
            soft_rank_with_blocks(&[1.0, 2.0], 0.0),
            Err(Error::Parameter { name: "epsilon", .. })
        ));
        assert!(soft_rank(&Tensor::vector(&[1.0, 2.0]), -0.5).is_err());
    }

    #[test]
    fn backward_rejects_stale_blocks() {
        let (_, blocks) = soft_rank_with_blocks(&[1.0, 2.0, 3.0], 0.1).unwrap();
        assert!(matches!(
            soft_rank_backward(&[1.0, 0.0], &blocks),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn singleton_blocks_give_zero_jacobian() {
        // Well-separated input at small epsilon: ranks are locally constant,
        // so every direction has zero derivative.
        let (_, blocks) = soft_rank_with_blocks(&[5.0, 1.0, 3.0], 1e-3).unwrap();
        assert_eq!(blocks.num_blocks(), 3);
        let g = soft_rank_backward(&[1.0, -2.0, 0.7], &blocks).unwrap();
        assert_eq!(g, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn global_block_averages_upstream() {
        let k = [1.0, 1.0, 1.0, 1.0];
        let eps = 0.5;
        let (_, blocks) = soft_rank_with_blocks(&k, eps).unwrap();
        assert_eq!(blocks.num_blocks(), 1);
        let u = [2.0, 0.0, -1.0, 3.0];
        let mean = 1.0;
        let g = soft_rank_backward(&u, &blocks).unwrap();
        for (gj, uj) in g.iter().zip(u) {
            assert!((gj - (mean - uj) / eps).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        // Inputs drawn so that +-h perturbations cannot change the pooling
        // structure (theta gaps bounded away from 1).
        let mut rng = crate::test_rng(77);
        let eps = 0.35;
        for _ in 0..20 {
            let n = 10;
            let k: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let theta: Vec<f64> = k.iter().map(|&v| -v / eps).collect();
            let mut sorted = theta.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let near_boundary = sorted
                .windows(2)
                .any(|w| ((w[0] - w[1]) - 1.0).abs() < 0.05);
            if near_boundary {
                continue;
            }

            for coord in 0..n {
                let tape = Tape::new();
                let kt = tape.watch(&Tensor::vector(&k));
                let r = soft_rank(&kt, eps).unwrap();
                let ri = r.gather(&[coord]).unwrap().sum().unwrap();
                let grad = ri.backward().unwrap().get(&kt).unwrap();
                let fd = finite_diff_gradient(
                    |probe| soft_rank_with_blocks(probe, eps).unwrap().0[coord],
                    &k,
                    1e-5,
                );
                assert!(
                    max_rel_error(grad.data(), &fd) <= 1e-4,
                    "coord {coord}: {:?} vs {:?}",
                    grad.data(),
                    fd
                );
            }
        }
    }

    #[test]
    fn translation_covariance_is_exact_on_representable_shifts() {
        // Dyadic inputs and shifts are exactly representable, so the identity
        // holds bitwise, not just approximately.
        let mut rng = crate::test_rng(21);
        let scale = f64::powi(2.0, -16);
        for _ in 0..50 {
            let n = rng.gen_range(2..24);
            let k: Vec<f64> = (0..n)
                .map(|_| rng.gen_range(-65536i64..65536) as f64 * scale)
                .collect();
            let c = rng.gen_range(-65536i64..65536) as f64 * scale;
            let shifted: Vec<f64> = k.iter().map(|&v| v + c).collect();
            for eps in [0.125, 0.5, 2.0] {
                let (r0, _) = soft_rank_with_blocks(&k, eps).unwrap();
                let (r1, _) = soft_rank_with_blocks(&shifted, eps).unwrap();
                assert_eq!(r0, r1);
            }
        }
    }

    #[test]
    fn hard_st_forward_is_exact_ranks_with_soft_gradient() {
        let k = [0.42, 0.40, 0.44, 0.41];
        let eps = 0.1; // wide enough that everything pools
        let tape = Tape::new();
        let kt = tape.watch(&Tensor::vector(&k));
        let r = soft_rank_mode(&kt, eps, RankMode::HardST).unwrap();
        assert_eq!(r.data(), exact_ranks_descending(&k).as_slice());
        let loss = r.gather(&[0]).unwrap().sum().unwrap();
        let g = loss.backward().unwrap().get(&kt).unwrap();
        let (_, blocks) = soft_rank_with_blocks(&k, eps).unwrap();
        let expect = soft_rank_backward(&[1.0, 0.0, 0.0, 0.0], &blocks).unwrap();
        assert_eq!(g.data(), expect.as_slice());
    }
}
