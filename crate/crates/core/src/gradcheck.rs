//! Finite-difference validation suites for every differentiable operation
//! and for the full attention kernels. The `grad-check` CLI subcommand runs
//! [`full_suite`] and fails the process if any case exceeds its tolerance.
//!
//! Numeric gradients come from central differences over forward evaluations
//! only; sampled points are kept away from sorting ties and pooling
//! boundaries so the compared object is the smooth branch the backward rules
//! implement.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{grad_check_attention, AttentionConfig, AttentionKernel};
use crate::error::Result;
use crate::rank::soft_rank;
use crate::sort::{apply_ascending_mode, soft_sort, SortForward};
use crate::tensor::{
    concat_cols, concat_flat, finite_diff_gradient, max_rel_error, outer_difference, GradCheckReport,
    Tape, Tensor,
};

const FD_STEP: f64 = 1e-5;
const OP_TOL: f64 = 1e-4;

/// Check one scalar-valued builder against central differences, once per
/// input, and push the results into `report`.
fn check(
    report: &mut GradCheckReport,
    name: &str,
    tol: f64,
    inputs: &[(&str, Vec<usize>, Vec<f64>)],
    build: impl Fn(&[Tensor]) -> Result<Tensor>,
) -> Result<()> {
    let tape = Tape::new();
    let watched: Vec<Tensor> = inputs
        .iter()
        .map(|(_, shape, data)| tape.watch(&Tensor::from_vec(shape.clone(), data.clone()).unwrap()))
        .collect();
    let loss = build(&watched)?;
    let grads = loss.backward()?;

    for (idx, (input_name, _, data)) in inputs.iter().enumerate() {
        let analytic = grads.get(&watched[idx]).expect("watched input");
        let numeric = finite_diff_gradient(
            |probe| {
                let plain: Vec<Tensor> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, (_, s, d))| {
                        let values = if j == idx { probe.to_vec() } else { d.clone() };
                        Tensor::from_vec(s.clone(), values).unwrap()
                    })
                    .collect();
                build(&plain).unwrap().item().unwrap()
            },
            data,
            FD_STEP,
        );
        report.push(
            format!("{name}/d_{input_name}"),
            max_rel_error(analytic.data(), &numeric),
            tol,
        );
    }
    Ok(())
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Values bounded away from zero, for kinked maps like `abs` and `relu`.
fn away_from_zero(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            sign * rng.gen_range(0.2..1.5)
        })
        .collect()
}

/// Finite-difference checks for every elementary tensor operation.
pub fn op_suite(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport::default();
    let mix = |rng: &mut ChaCha8Rng, n: usize| {
        Tensor::from_vec(vec![n], uniform(rng, n, -1.0, 1.0)).unwrap()
    };

    let m34 = uniform(&mut rng, 12, -1.0, 1.0);
    let m42 = uniform(&mut rng, 8, -1.0, 1.0);
    let mix6 = mix(&mut rng, 6);
    check(
        &mut report,
        "matmul",
        OP_TOL,
        &[("a", vec![3, 4], m34.clone()), ("b", vec![4, 2], m42)],
        move |t| {
            t[0].matmul(&t[1])?
                .reshape(vec![6])?
                .mul(&mix6)?
                .sum()
        },
    )?;

    let mix12 = mix(&mut rng, 12);
    let x34 = uniform(&mut rng, 12, -1.0, 1.0);
    check(
        &mut report,
        "transpose",
        OP_TOL,
        &[("x", vec![3, 4], x34.clone())],
        move |t| t[0].transpose()?.reshape(vec![12])?.mul(&mix12)?.sum(),
    )?;

    let a6 = uniform(&mut rng, 6, -1.0, 1.0);
    let b6 = uniform(&mut rng, 6, -1.0, 1.0);
    let mix_bin = mix(&mut rng, 6);
    check(
        &mut report,
        "add_sub_mul",
        OP_TOL,
        &[("a", vec![6], a6), ("b", vec![6], b6)],
        move |t| {
            let s = t[0].add(&t[1])?.mul(&t[0].sub(&t[1])?)?.mul(&t[0].mul(&t[1])?)?;
            s.mul(&mix_bin)?.sum()
        },
    )?;

    let scale_in = uniform(&mut rng, 5, -1.0, 1.0);
    check(
        &mut report,
        "scale_add_scalar_neg",
        OP_TOL,
        &[("x", vec![5], scale_in)],
        |t| t[0].scale(2.5)?.add_scalar(-0.7)?.neg()?.sum(),
    )?;

    let abs_in = away_from_zero(&mut rng, 8);
    let mix8 = mix(&mut rng, 8);
    check(
        &mut report,
        "abs",
        OP_TOL,
        &[("x", vec![8], abs_in)],
        move |t| t[0].abs()?.mul(&mix8)?.sum(),
    )?;

    let relu_in = away_from_zero(&mut rng, 8);
    let mix8b = mix(&mut rng, 8);
    check(
        &mut report,
        "relu",
        OP_TOL,
        &[("x", vec![8], relu_in)],
        move |t| t[0].relu()?.mul(&mix8b)?.sum(),
    )?;

    let tanh_in = uniform(&mut rng, 8, -2.0, 2.0);
    let mix8c = mix(&mut rng, 8);
    check(
        &mut report,
        "tanh",
        OP_TOL,
        &[("x", vec![8], tanh_in)],
        move |t| t[0].tanh()?.mul(&mix8c)?.sum(),
    )?;

    let mean_in = uniform(&mut rng, 7, -1.0, 1.0);
    check(&mut report, "mean", OP_TOL, &[("x", vec![7], mean_in)], |t| {
        t[0].mean()
    })?;

    let sm_in = uniform(&mut rng, 12, -2.0, 2.0);
    let mix12b = mix(&mut rng, 12);
    check(
        &mut report,
        "row_softmax",
        OP_TOL,
        &[("x", vec![3, 4], sm_in)],
        move |t| t[0].row_softmax()?.reshape(vec![12])?.mul(&mix12b)?.sum(),
    )?;

    let ln_x = uniform(&mut rng, 12, -1.5, 1.5);
    let ln_g = uniform(&mut rng, 4, 0.5, 1.5);
    let ln_b = uniform(&mut rng, 4, -0.5, 0.5);
    let mix12c = mix(&mut rng, 12);
    check(
        &mut report,
        "layer_norm",
        OP_TOL,
        &[
            ("x", vec![3, 4], ln_x),
            ("gamma", vec![4], ln_g),
            ("beta", vec![4], ln_b),
        ],
        move |t| {
            t[0].layer_norm(&t[1], &t[2], 1e-5)?
                .reshape(vec![12])?
                .mul(&mix12c)?
                .sum()
        },
    )?;

    let rn_in = uniform(&mut rng, 12, 0.1, 2.0);
    let mix12d = mix(&mut rng, 12);
    check(
        &mut report,
        "row_l1_normalize",
        OP_TOL,
        &[("x", vec![3, 4], rn_in)],
        move |t| {
            t[0].row_l1_normalize(1e-12)?
                .reshape(vec![12])?
                .mul(&mix12d)?
                .sum()
        },
    )?;

    let gather_in = uniform(&mut rng, 6, -1.0, 1.0);
    let mix5 = mix(&mut rng, 5);
    check(
        &mut report,
        "gather_repeated",
        OP_TOL,
        &[("x", vec![6], gather_in)],
        move |t| t[0].gather(&[4, 0, 2, 2, 5])?.mul(&mix5)?.sum(),
    )?;

    let slice_in = uniform(&mut rng, 12, -1.0, 1.0);
    let mix6b = mix(&mut rng, 6);
    check(
        &mut report,
        "slice_cols",
        OP_TOL,
        &[("x", vec![3, 4], slice_in)],
        move |t| t[0].slice_cols(1, 3)?.reshape(vec![6])?.mul(&mix6b)?.sum(),
    )?;

    let bc_mat = uniform(&mut rng, 12, -1.0, 1.0);
    let bc_row = uniform(&mut rng, 4, -1.0, 1.0);
    let mix12e = mix(&mut rng, 12);
    check(
        &mut report,
        "add_row_broadcast",
        OP_TOL,
        &[("mat", vec![3, 4], bc_mat), ("row", vec![4], bc_row)],
        move |t| {
            t[0].add_row_broadcast(&t[1])?
                .reshape(vec![12])?
                .mul(&mix12e)?
                .sum()
        },
    )?;

    let od_a = uniform(&mut rng, 3, -1.0, 1.0);
    let od_b = uniform(&mut rng, 4, -1.0, 1.0);
    let mix12f = mix(&mut rng, 12);
    check(
        &mut report,
        "outer_difference",
        OP_TOL,
        &[("a", vec![3], od_a), ("b", vec![4], od_b)],
        move |t| {
            outer_difference(&t[0], &t[1])?
                .reshape(vec![12])?
                .mul(&mix12f)?
                .sum()
        },
    )?;

    let cc_a = uniform(&mut rng, 6, -1.0, 1.0);
    let cc_b = uniform(&mut rng, 3, -1.0, 1.0);
    let mix9 = mix(&mut rng, 9);
    check(
        &mut report,
        "concat_cols_flat",
        OP_TOL,
        &[("a", vec![3, 2], cc_a), ("b", vec![3, 1], cc_b)],
        move |t| {
            let joined = concat_cols(&[t[0].clone(), t[1].clone()])?;
            let flat = concat_flat(&[joined], vec![9])?;
            flat.mul(&mix9)?.sum()
        },
    )?;

    let mv_m = uniform(&mut rng, 12, -1.0, 1.0);
    let mv_v = uniform(&mut rng, 4, -1.0, 1.0);
    let mix3 = mix(&mut rng, 3);
    check(
        &mut report,
        "matvec",
        OP_TOL,
        &[("m", vec![3, 4], mv_m), ("v", vec![4], mv_v)],
        move |t| t[0].matvec(&t[1])?.mul(&mix3)?.sum(),
    )?;

    Ok(report)
}

/// Finite-difference checks for SoftSort and the relaxed permutation product.
pub fn sort_suite(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport::default();
    let n = 6;
    let tau = 0.7;

    let q0 = crate::oracles::gap_separated(n, 0.15, &mut rng);
    let mix = Tensor::from_vec(vec![n * n], uniform(&mut rng, n * n, -1.0, 1.0)).unwrap();
    check(
        &mut report,
        "soft_sort_matrix",
        OP_TOL,
        &[("q", vec![n], q0.clone())],
        move |t| {
            soft_sort(&t[0].neg()?, tau)?
                .soft
                .reshape(vec![n * n])?
                .mul(&mix)?
                .sum()
        },
    )?;

    let v0 = uniform(&mut rng, n, -1.0, 1.0);
    let mix_v = Tensor::from_vec(vec![n], uniform(&mut rng, n, -1.0, 1.0)).unwrap();
    check(
        &mut report,
        "apply_ascending_soft_path",
        OP_TOL,
        &[("q", vec![n], q0), ("v", vec![n], v0)],
        move |t| {
            apply_ascending_mode(&t[0], &t[1], tau, SortForward::Soft)?
                .mul(&mix_v)?
                .sum()
        },
    )?;
    Ok(report)
}

/// Sample a vector whose soft-rank pooling structure is stable under the
/// finite-difference step: sorted `-k/eps` gaps stay away from 1.
fn rank_stable_input(rng: &mut ChaCha8Rng, n: usize, epsilon: f64, margin: f64) -> Vec<f64> {
    loop {
        let k = uniform(rng, n, -1.0, 1.0);
        let mut theta: Vec<f64> = k.iter().map(|&v| -v / epsilon).collect();
        theta.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let ok = theta
            .windows(2)
            .all(|w| ((w[0] - w[1]) - 1.0).abs() > margin);
        if ok {
            return k;
        }
    }
}

/// Finite-difference checks for the soft-rank Jacobian.
pub fn rank_suite(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport::default();
    for (label, n, epsilon) in [("n6", 6usize, 0.4), ("n10", 10usize, 0.35)] {
        let k0 = rank_stable_input(&mut rng, n, epsilon, 0.08);
        let mix = Tensor::from_vec(vec![n], uniform(&mut rng, n, -1.0, 1.0)).unwrap();
        check(
            &mut report,
            &format!("soft_rank_{label}"),
            OP_TOL,
            &[("k", vec![n], k0)],
            move |t| soft_rank(&t[0], epsilon)?.mul(&mix)?.sum(),
        )?;
    }
    Ok(report)
}

/// Sample a (q, k) pair whose fully-soft xi evaluation sits away from every
/// kink: pooling boundaries of the rank step and zeros of the rank jumps.
fn xi_stable_pair(
    rng: &mut ChaCha8Rng,
    d: usize,
    tau: f64,
    epsilon: f64,
) -> (Vec<f64>, Vec<f64>) {
    let cfg_probe = |q: &[f64], k: &[f64]| -> Result<bool> {
        let sorted = apply_ascending_mode(
            &Tensor::vector(q),
            &Tensor::vector(k),
            tau,
            SortForward::Soft,
        )?;
        let mut theta: Vec<f64> = sorted.data().iter().map(|&v| -v / epsilon).collect();
        theta.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let boundary_ok = theta
            .windows(2)
            .all(|w| ((w[0] - w[1]) - 1.0).abs() > 0.05);
        let (ranks, _) = crate::rank::soft_rank_with_blocks(sorted.data(), epsilon)?;
        let jumps_ok = ranks.windows(2).all(|w| (w[1] - w[0]).abs() > 0.02);
        Ok(boundary_ok && jumps_ok)
    };
    loop {
        let q = crate::oracles::gap_separated(d, 0.2, rng);
        let k = uniform(rng, d, -1.0, 1.0);
        if cfg_probe(&q, &k).unwrap_or(false) {
            return (q, k);
        }
    }
}

/// Finite-difference checks for the differentiable xi on its soft path.
pub fn xi_suite(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport::default();
    for (label, d) in [("d4", 4usize), ("d8", 8usize)] {
        let tau = 1.0;
        let epsilon = 0.3;
        let (q0, k0) = xi_stable_pair(&mut rng, d, tau, epsilon);
        let cfg = AttentionConfig::new(d, 1)?
            .with_tau(tau)?
            .with_epsilon(epsilon)?
            .with_sort_forward(SortForward::Soft);
        check(
            &mut report,
            &format!("xi_soft_{label}"),
            OP_TOL,
            &[("q", vec![d], q0), ("k", vec![d], k0)],
            move |t| crate::attention::xi_soft(&t[0], &t[1], &cfg),
        )?;
    }
    Ok(report)
}

/// Attention-level checks for both kernels.
pub fn attention_suite(seed: u64) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::default();
    let dot = AttentionConfig::new(8, 2)?.with_kernel(AttentionKernel::DotProduct);
    report.merge(grad_check_attention(&dot, seed)?);
    let xicor = AttentionConfig::new(8, 2)?.with_epsilon(0.3)?;
    report.merge(grad_check_attention(&xicor, seed)?);
    Ok(report)
}

/// Every gradient check in the crate, merged.
pub fn full_suite(seed: u64) -> Result<GradCheckReport> {
    let mut report = op_suite(seed)?;
    report.merge(sort_suite(seed.wrapping_add(1))?);
    report.merge(rank_suite(seed.wrapping_add(2))?);
    report.merge(xi_suite(seed.wrapping_add(3))?);
    report.merge(attention_suite(seed.wrapping_add(4))?);
    Ok(report)
}
