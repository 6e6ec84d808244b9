//! Structural invariants of the sorting, ranking, and attention kernels.
//! Exact (bitwise) identities are exercised on dyadic inputs so the claimed
//! equalities are representable in floating point at all.

use proptest::prelude::*;
use rand::Rng;
use xicor_core::attention::{score_matrix, AttentionConfig};
use xicor_core::rank::soft_rank_with_blocks;
use xicor_core::sort::{argsort_descending, permutation_matrix, soft_sort};
use xicor_core::stats::{xi_exact, SamplePair};
use xicor_core::tensor::Tensor;

fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

/// Random dyadic rationals (multiples of 2^-16): closed under the shifts the
/// exactness tests apply.
fn dyadic(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let scale = f64::powi(2.0, -16);
    (0..n)
        .map(|_| rng.gen_range(-65536i64..65536) as f64 * scale)
        .collect()
}

#[test]
fn xi_stays_within_the_tie_free_bounds() {
    let mut rng = rng(31);
    for _ in 0..300 {
        let n = rng.gen_range(3usize..40);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let xi = xi_exact(&SamplePair::new(&x, &y).unwrap()).unwrap();
        let nf = n as f64;
        assert!(xi <= (nf - 2.0) / (nf + 1.0) + 1e-12);
        assert!(xi >= -0.5 - 3.0 / (nf + 1.0) - 1e-12);
    }
}

#[test]
fn monotone_y_attains_the_upper_bound_exactly() {
    let mut rng = rng(32);
    for _ in 0..100 {
        let n = rng.gen_range(3usize..64);
        let x: Vec<f64> = xicor_core::oracles::gap_separated(n, 0.01, &mut rng);
        let y: Vec<f64> = x.iter().map(|&v| v.exp() + 2.0 * v).collect();
        let xi = xi_exact(&SamplePair::new(&x, &y).unwrap()).unwrap();
        let nf = n as f64;
        assert_eq!(xi, 1.0 - 3.0 * (nf - 1.0) / (nf * nf - 1.0));
    }
}

#[test]
fn xi_is_invariant_under_monotone_transforms_of_either_argument() {
    let transforms: [fn(f64) -> f64; 4] = [
        |v| 2.0 * v + 1.0,
        |v| v * v * v + v,
        f64::exp,
        f64::sinh,
    ];
    let mut rng = rng(33);
    for trial in 0..200 {
        let n = rng.gen_range(4usize..32);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let f = transforms[trial % transforms.len()];
        let base = xi_exact(&SamplePair::new(&x, &y).unwrap()).unwrap();
        let fx: Vec<f64> = x.iter().map(|&v| f(v)).collect();
        let fy: Vec<f64> = y.iter().map(|&v| f(v)).collect();
        assert_eq!(base, xi_exact(&SamplePair::new(&fx, &y).unwrap()).unwrap());
        assert_eq!(base, xi_exact(&SamplePair::new(&x, &fy).unwrap()).unwrap());
        assert_eq!(base, xi_exact(&SamplePair::new(&fx, &fy).unwrap()).unwrap());
    }
}

#[test]
fn xi_is_invariant_under_joint_sample_permutation() {
    let mut rng = rng(34);
    for _ in 0..200 {
        let n = rng.gen_range(3usize..32);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let base = xi_exact(&SamplePair::new(&x, &y).unwrap()).unwrap();
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        let xp: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
        let yp: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        assert_eq!(base, xi_exact(&SamplePair::new(&xp, &yp).unwrap()).unwrap());
    }
}

#[test]
fn rank_reversal_leaves_xi_unchanged() {
    // Negating y reverses its ranks r -> (n+1) - r; the jump magnitudes and
    // therefore xi are untouched. The soft pipeline's descending convention
    // rests on the same identity.
    let mut rng = rng(35);
    for _ in 0..200 {
        let n = rng.gen_range(3usize..48);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let neg_y: Vec<f64> = y.iter().map(|&v| -v).collect();
        let a = xi_exact(&SamplePair::new(&x, &y).unwrap()).unwrap();
        let b = xi_exact(&SamplePair::new(&x, &neg_y).unwrap()).unwrap();
        assert_eq!(a, b);

        // Same identity stated on rank vectors directly.
        let asc = xicor_core::exact_ranks_ascending(&y);
        let desc = xicor_core::exact_ranks_descending(&y);
        let jump = |r: &[f64]| -> f64 { r.windows(2).map(|w| (w[1] - w[0]).abs()).sum() };
        assert_eq!(jump(&asc), jump(&desc));
    }
}

#[test]
fn soft_sort_shift_invariance_is_exact_on_representable_shifts() {
    let mut rng = rng(36);
    for _ in 0..200 {
        let n = rng.gen_range(2usize..24);
        let q = dyadic(&mut rng, n);
        let c = rng.gen_range(-65536i64..65536) as f64 * f64::powi(2.0, -16);
        let shifted: Vec<f64> = q.iter().map(|&v| v + c).collect();
        for tau in [0.25, 1.0, 4.0] {
            let a = soft_sort(&Tensor::vector(&q), tau).unwrap();
            let b = soft_sort(&Tensor::vector(&shifted), tau).unwrap();
            assert_eq!(a.hard.indices(), b.hard.indices());
            assert_eq!(a.soft.data(), b.soft.data());
        }
    }
}

#[test]
fn soft_rank_translation_covariance_is_exact_on_representable_shifts() {
    let mut rng = rng(37);
    for _ in 0..200 {
        let n = rng.gen_range(2usize..24);
        let k = dyadic(&mut rng, n);
        let c = rng.gen_range(-65536i64..65536) as f64 * f64::powi(2.0, -16);
        let shifted: Vec<f64> = k.iter().map(|&v| v + c).collect();
        for eps in [0.125, 1.0] {
            let (a, _) = soft_rank_with_blocks(&k, eps).unwrap();
            let (b, _) = soft_rank_with_blocks(&shifted, eps).unwrap();
            assert_eq!(a, b);
        }
    }
}

#[test]
fn soft_argmax_rows_agree_with_exact_argsort_for_all_tau() {
    let mut rng = rng(38);
    for _ in 0..200 {
        let n = rng.gen_range(2usize..16);
        let q = xicor_core::oracles::gap_separated(n, 0.05, &mut rng);
        for tau in [1e-3, 0.3, 1.0, 10.0] {
            let sp = soft_sort(&Tensor::vector(&q), tau).unwrap();
            for pos in 0..n {
                let row: Vec<f64> = (0..n).map(|j| sp.soft.at(pos, j)).collect();
                let argmax = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                assert_eq!(argmax, sp.hard.indices()[pos], "tau={tau} pos={pos}");
            }
        }
    }
}

#[test]
fn soft_matrix_approaches_hard_monotonically_as_tau_shrinks() {
    let mut rng = rng(39);
    for _ in 0..50 {
        let n = rng.gen_range(3usize..10);
        let q = xicor_core::oracles::gap_separated(n, 0.2, &mut rng);
        let hard = permutation_matrix(&argsort_descending(&q));
        let taus = [4.0, 1.0, 0.25, 0.05, 1e-3];
        let mut last = f64::INFINITY;
        for tau in taus {
            let sp = soft_sort(&Tensor::vector(&q), tau).unwrap();
            let dist = sp
                .soft
                .data()
                .iter()
                .zip(hard.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(dist <= last + 1e-15, "tau={tau}: {dist} > {last}");
            last = dist;
        }
        assert!(last <= 1e-9);
    }
}

#[test]
fn joint_coordinate_permutation_leaves_scores_bit_identical() {
    // xi treats the d coordinates as an unordered sample; with the hard
    // straight-through forward the score matrix is bitwise invariant.
    let mut rng = rng(40);
    let cfg = AttentionConfig::new(8, 1).unwrap();
    for _ in 0..200 {
        let l = 3;
        let d = 8;
        let q: Vec<f64> = (0..l * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let k: Vec<f64> = (0..l * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut perm: Vec<usize> = (0..d).collect();
        for i in (1..d).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        let permute = |m: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; l * d];
            for row in 0..l {
                for (new_col, &src) in perm.iter().enumerate() {
                    out[row * d + new_col] = m[row * d + src];
                }
            }
            out
        };
        let base = score_matrix(
            &Tensor::from_vec(vec![l, d], q.clone()).unwrap(),
            &Tensor::from_vec(vec![l, d], k.clone()).unwrap(),
            &cfg,
        )
        .unwrap();
        let permuted = score_matrix(
            &Tensor::from_vec(vec![l, d], permute(&q)).unwrap(),
            &Tensor::from_vec(vec![l, d], permute(&k)).unwrap(),
            &cfg,
        )
        .unwrap();
        assert_eq!(base.data(), permuted.data());
    }
}

#[test]
fn monotone_transform_of_keys_or_queries_preserves_scores() {
    let transforms: [fn(f64) -> f64; 3] = [|v| 2.0 * v + 1.0, |v| v * v * v + v, f64::exp];
    let mut rng = rng(41);
    let cfg = AttentionConfig::new(8, 1)
        .unwrap()
        .with_epsilon(1e-4)
        .unwrap();
    for trial in 0..200 {
        let (l, d) = (3, 8);
        let f = transforms[trial % transforms.len()];
        let mut q = Vec::with_capacity(l * d);
        let mut k = Vec::with_capacity(l * d);
        for _ in 0..l {
            q.extend(xicor_core::oracles::gap_separated(d, 0.1, &mut rng));
            k.extend(xicor_core::oracles::gap_separated(d, 0.1, &mut rng));
        }
        let base = score_matrix(
            &Tensor::from_vec(vec![l, d], q.clone()).unwrap(),
            &Tensor::from_vec(vec![l, d], k.clone()).unwrap(),
            &cfg,
        )
        .unwrap();
        let fq: Vec<f64> = q.iter().map(|&v| f(v)).collect();
        let fk: Vec<f64> = k.iter().map(|&v| f(v)).collect();
        let q_transformed = score_matrix(
            &Tensor::from_vec(vec![l, d], fq).unwrap(),
            &Tensor::from_vec(vec![l, d], k.clone()).unwrap(),
            &cfg,
        )
        .unwrap();
        let k_transformed = score_matrix(
            &Tensor::from_vec(vec![l, d], q).unwrap(),
            &Tensor::from_vec(vec![l, d], fk).unwrap(),
            &cfg,
        )
        .unwrap();
        for i in 0..l * l {
            assert!((base.data()[i] - q_transformed.data()[i]).abs() <= 1e-6);
            assert!((base.data()[i] - k_transformed.data()[i]).abs() <= 1e-6);
        }
    }
}

#[test]
fn score_matrix_is_directional() {
    // A witness pair with S(Q, K) != S(K, Q)^T.
    let cfg = AttentionConfig::new(9, 1).unwrap().with_epsilon(1e-4).unwrap();
    let grid: Vec<f64> = (-4..=4).map(|v| v as f64).collect();
    let squared: Vec<f64> = grid.iter().map(|&v| v * v + 0.01 * v).collect();
    let q = Tensor::from_vec(vec![1, 9], grid).unwrap();
    let k = Tensor::from_vec(vec![1, 9], squared).unwrap();
    let fwd = score_matrix(&q, &k, &cfg).unwrap();
    let rev = score_matrix(&k, &q, &cfg).unwrap();
    assert!((fwd.data()[0] - rev.data()[0]).abs() > 0.1);
}

#[test]
fn forward_scores_stay_within_the_tie_free_bounds() {
    let mut rng = rng(42);
    let cfg = AttentionConfig::new(8, 1).unwrap().with_epsilon(1e-4).unwrap();
    let d = 8.0;
    let upper = (d - 2.0) / (d + 1.0);
    let lower = -0.5 - 3.0 / (d + 1.0);
    for _ in 0..200 {
        let l = 4;
        let q: Vec<f64> = (0..l * 8).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let k: Vec<f64> = (0..l * 8).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let s = score_matrix(
            &Tensor::from_vec(vec![l, 8], q).unwrap(),
            &Tensor::from_vec(vec![l, 8], k).unwrap(),
            &cfg,
        )
        .unwrap();
        for &v in s.data() {
            assert!(v <= upper + 1e-6);
            assert!(v >= lower - 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prop_soft_rows_are_stochastic(
        q in prop::collection::vec(-10.0f64..10.0, 2..20),
        tau in 0.05f64..10.0,
    ) {
        let sp = soft_sort(&Tensor::vector(&q), tau).unwrap();
        let n = q.len();
        for i in 0..n {
            let sum: f64 = (0..n).map(|j| sp.soft.at(i, j)).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn prop_soft_rank_sums_to_permutahedron_level(
        k in prop::collection::vec(-10.0f64..10.0, 2..20),
        eps in 1e-3f64..10.0,
    ) {
        let (r, _) = soft_rank_with_blocks(&k, eps).unwrap();
        let n = k.len() as f64;
        prop_assert!((r.iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() <= 1e-6);
    }

    #[test]
    fn prop_pav_output_is_non_increasing_projection(
        w in prop::collection::vec(-10.0f64..10.0, 1..40),
    ) {
        let iso = xicor_core::isotonic_regression(&w);
        for pair in iso.values.windows(2) {
            prop_assert!(pair[0] >= pair[1] - 1e-12);
        }
        for block in &iso.blocks {
            let mean: f64 =
                w[block.start..block.end].iter().sum::<f64>() / block.len() as f64;
            prop_assert!((block.mean - mean).abs() <= 1e-12);
        }
    }
}
