//! Nonlinear-correlation attention for time-series forecasting.
//!
//! The crate provides, bottom up:
//!
//! - [`tensor`]: dense `f64` tensors with tape-based reverse-mode autodiff
//!   and user-registered custom-gradient nodes;
//! - [`stats`]: exact Chatterjee xi, Pearson rho, and correlation matrices;
//! - [`sort`]: SoftSort relaxation of argsort with a straight-through hard
//!   permutation;
//! - [`rank`]: differentiable ranking via isotonic regression (PAV) with an
//!   O(n) backward rule;
//! - [`attention`]: attention layers scoring query-key pairs by a
//!   differentiable xi, plus the scaled dot-product baseline;
//! - [`forecast`]: a desk-scale patch-encoder forecaster with training,
//!   evaluation, sweeps, and runtime benchmarks.
//!
//! [`oracles`] holds independent reference implementations for the test
//! suites only.

pub mod attention;
pub mod error;
pub mod forecast;
pub mod gradcheck;
pub mod oracles;
pub mod rank;
pub mod sort;
pub mod stats;
pub mod tensor;

pub use attention::{
    attention_forward, grad_check_attention, score_matrix, xi_soft, AttentionConfig,
    AttentionKernel, AttentionOutput, AttentionWeights, ScoreMode,
};
pub use error::{Error, Result};
pub use rank::{
    exact_ranks_ascending, exact_ranks_descending, isotonic_regression, soft_rank,
    soft_rank_backward, soft_rank_mode, soft_rank_with_blocks, IsotonicSolution, PavBlock,
    RankConvention, RankMode, RankVector, SoftRankBlocks,
};
pub use sort::{
    apply_ascending, apply_ascending_mode, argsort_ascending, argsort_descending,
    permutation_matrix, soft_sort, Permutation, SoftPermutation, SortForward,
};
pub use stats::{
    correlation_matrix, pearson, xi_exact, CorrelationKind, CorrelationMatrix, SamplePair,
};
pub use tensor::{Gradients, Tape, Tensor};

#[cfg(test)]
pub(crate) fn test_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
