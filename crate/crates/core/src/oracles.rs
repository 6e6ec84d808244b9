//! Independent reference implementations used by the test suites.
//!
//! Everything here recomputes results through a different route than the
//! library kernels (selection sorts, exhaustive enumeration, projected
//! gradient over vertex mixtures, plain-loop attention) so the two sides of
//! each check cannot share a bug. Not part of the production surface.

use rand::Rng;

/// Random values whose pairwise gaps all exceed `min_gap`, in shuffled order.
pub fn gap_separated(n: usize, min_gap: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut values = Vec::with_capacity(n);
    let mut current = rng.gen_range(-1.0..1.0);
    for _ in 0..n {
        values.push(current);
        current += min_gap + rng.gen_range(0.1 * min_gap..2.0 * min_gap);
    }
    // Fisher-Yates so the sorted structure is not handed to the caller.
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        values.swap(i, j);
    }
    values
}

/// Brute-force Chatterjee xi: selection-sort the pairs by x, count ranks by
/// pairwise comparison, then apply `1 - 3 * sum|dr| / (n^2 - 1)`.
///
/// Tie-break matches the library convention: stable in the original index.
pub fn xi_brute_force(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    assert!(n >= 2 && y.len() == n);
    // Selection sort of index pairs by (x, original index).
    let mut order: Vec<usize> = (0..n).collect();
    for a in 0..n {
        let mut best = a;
        for b in a + 1..n {
            let (ib, ibest) = (order[b], order[best]);
            if x[ib] < x[ibest] || (x[ib] == x[ibest] && ib < ibest) {
                best = b;
            }
        }
        order.swap(a, best);
    }
    let y_sorted: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    // Rank by counting: smaller values, plus earlier equal values.
    let rank = |i: usize| -> f64 {
        let mut r = 1usize;
        for j in 0..n {
            if y_sorted[j] < y_sorted[i] || (y_sorted[j] == y_sorted[i] && j < i) {
                r += 1;
            }
        }
        r as f64
    };
    let mut sum = 0.0;
    let mut prev = rank(0);
    for i in 1..n {
        let cur = rank(i);
        sum += (cur - prev).abs();
        prev = cur;
    }
    1.0 - 3.0 * sum / ((n * n - 1) as f64)
}

/// Exhaustive isotonic projection for small `n`: try every ordered partition
/// of the indices into blocks, set each block to its mean, keep the feasible
/// candidate with the smallest squared distance to `w`.
pub fn isotonic_brute_force(w: &[f64]) -> Vec<f64> {
    let n = w.len();
    assert!(n >= 1 && n <= 16, "exhaustive oracle is exponential in n");
    let mut best: Option<(f64, Vec<f64>)> = None;
    // Bit b of `cut` set means a block boundary between positions b and b+1.
    for cut in 0u32..(1 << (n - 1)) {
        let mut v = vec![0.0; n];
        let mut start = 0;
        let mut prev_mean = f64::INFINITY;
        let mut feasible = true;
        for end in 1..=n {
            let boundary = end == n || (cut >> (end - 1)) & 1 == 1;
            if !boundary {
                continue;
            }
            let mean = w[start..end].iter().sum::<f64>() / (end - start) as f64;
            if mean > prev_mean + 1e-12 {
                feasible = false;
                break;
            }
            v[start..end].fill(mean);
            prev_mean = mean;
            start = end;
        }
        if !feasible {
            continue;
        }
        let cost: f64 = v.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().map_or(true, |(c, _)| cost < *c) {
            best = Some((cost, v));
        }
    }
    best.expect("at least the all-pooled candidate is feasible").1
}

fn permutations(base: &[f64]) -> Vec<Vec<f64>> {
    // Heap's algorithm.
    let mut out = Vec::new();
    let mut a = base.to_vec();
    let n = a.len();
    let mut c = vec![0usize; n];
    out.push(a.clone());
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            out.push(a.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Dense solve by Gaussian elimination with partial pivoting.
fn gauss_solve(mut a: Vec<f64>, mut b: Vec<f64>, dim: usize) -> Vec<f64> {
    for col in 0..dim {
        let pivot = (col..dim)
            .max_by(|&i, &j| {
                a[i * dim + col]
                    .abs()
                    .partial_cmp(&a[j * dim + col].abs())
                    .unwrap()
            })
            .unwrap();
        for j in 0..dim {
            a.swap(col * dim + j, pivot * dim + j);
        }
        b.swap(col, pivot);
        let diag = a[col * dim + col];
        for row in col + 1..dim {
            let factor = a[row * dim + col] / diag;
            for j in col..dim {
                a[row * dim + j] -= factor * a[col * dim + j];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; dim];
    for row in (0..dim).rev() {
        let mut acc = b[row];
        for j in row + 1..dim {
            acc -= a[row * dim + j] * x[j];
        }
        x[row] = acc / a[row * dim + row];
    }
    x
}

/// Projection of `theta` onto the affine hull of the given vertices subject
/// to mixture weights summing to 1, by the KKT system; weights may come back
/// negative (the caller prunes).
fn face_projection_weights(verts: &[&Vec<f64>], theta: &[f64]) -> Vec<f64> {
    let s = verts.len();
    let dim = s + 1;
    let mut a = vec![0.0; dim * dim];
    let mut b = vec![0.0; dim];
    for i in 0..s {
        for j in 0..s {
            let dot: f64 = verts[i].iter().zip(verts[j]).map(|(x, y)| x * y).sum();
            a[i * dim + j] = dot + if i == j { 1e-10 } else { 0.0 };
        }
        a[i * dim + s] = 1.0;
        a[s * dim + i] = 1.0;
        b[i] = verts[i].iter().zip(theta).map(|(x, y)| x * y).sum();
    }
    b[s] = 1.0;
    let mut solution = gauss_solve(a, b, dim);
    solution.truncate(s);
    solution
}

/// Brute-force soft descending ranks: maximize `<y, -k> - eps/2 ||y||^2` over
/// convex combinations of all n! permutations of `(n, ..., 1)`, equivalently
/// project `theta = -k/eps` onto the permutahedron. Projected gradient ascent
/// on the mixture weights with exact line search discovers the active face;
/// an equality-constrained least-squares polish on that face finishes the
/// projection, verified by the first-order optimality gap over all vertices.
pub fn permutahedron_soft_rank(k: &[f64], epsilon: f64, max_iters: usize) -> Vec<f64> {
    let n = k.len();
    assert!(n >= 1 && n <= 7, "vertex enumeration is factorial in n");
    let rho: Vec<f64> = (1..=n).rev().map(|v| v as f64).collect();
    let verts = permutations(&rho);
    let m = verts.len();
    let theta: Vec<f64> = k.iter().map(|&v| -v / epsilon).collect();

    // Warm start near the best vertex for the linear term.
    let best = (0..m)
        .max_by(|&i, &j| {
            let si: f64 = verts[i].iter().zip(&theta).map(|(a, b)| a * b).sum();
            let sj: f64 = verts[j].iter().zip(&theta).map(|(a, b)| a * b).sum();
            si.partial_cmp(&sj).unwrap()
        })
        .unwrap();
    let mut lambda = vec![0.1 / m as f64; m];
    lambda[best] += 0.9;

    let y_of = |lambda: &[f64]| -> Vec<f64> {
        let mut y = vec![0.0; n];
        for (l, v) in lambda.iter().zip(&verts) {
            if *l > 0.0 {
                for (yi, vi) in y.iter_mut().zip(v) {
                    *yi += l * vi;
                }
            }
        }
        y
    };
    // First-order gap of min ||y - theta||^2 / 2 over the polytope.
    let optimality_gap = |y: &[f64]| -> f64 {
        let g: Vec<f64> = theta.iter().zip(y).map(|(t, yi)| t - yi).collect();
        let at_y: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
        verts
            .iter()
            .map(|v| g.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() - at_y)
            .fold(0.0, f64::max)
    };

    let mut y = y_of(&lambda);
    let eta = 1.0 / (epsilon * (n * n) as f64 + 1.0);
    let gap_tol = 1e-10 * (1.0 + theta.iter().map(|t| t * t).sum::<f64>());
    for round in 0..8 {
        let iters = if round == 0 { max_iters / 8 } else { max_iters / 32 };
        for _ in 0..iters.max(500) {
            let gy: Vec<f64> = theta.iter().zip(&y).map(|(t, yi)| t - yi).collect();
            let glambda: Vec<f64> = verts
                .iter()
                .map(|v| v.iter().zip(&gy).map(|(a, b)| a * b).sum())
                .collect();
            let proposal = project_simplex(
                &lambda
                    .iter()
                    .zip(&glambda)
                    .map(|(&l, &g)| l + eta * g)
                    .collect::<Vec<_>>(),
            );
            let y_prop = y_of(&proposal);
            let dy: Vec<f64> = y_prop.iter().zip(&y).map(|(a, b)| a - b).collect();
            let dd: f64 = dy.iter().map(|d| d * d).sum();
            if dd < 1e-28 {
                break;
            }
            let num: f64 = dy.iter().zip(&gy).map(|(d, g)| d * g).sum();
            let t = (num / dd).clamp(0.0, 1.0);
            if t == 0.0 {
                break;
            }
            for (l, p) in lambda.iter_mut().zip(&proposal) {
                *l += t * (p - *l);
            }
            for (yi, d) in y.iter_mut().zip(&dy) {
                *yi += t * d;
            }
        }

        // Polish: exact projection onto the small face the iterate points at.
        // Candidates: the heaviest mixture vertices plus the steepest vertex
        // for the current gradient, so the true face accumulates over rounds.
        let mut support: Vec<usize> = {
            let mut by_mass: Vec<usize> = (0..m).filter(|&p| lambda[p] > 1e-9).collect();
            by_mass.sort_by(|&a, &b| lambda[b].partial_cmp(&lambda[a]).unwrap());
            by_mass.truncate(3 * n + 2);
            let g: Vec<f64> = theta.iter().zip(&y).map(|(t, yi)| t - yi).collect();
            let fw = (0..m)
                .max_by(|&i, &j| {
                    let si: f64 = verts[i].iter().zip(&g).map(|(a, b)| a * b).sum();
                    let sj: f64 = verts[j].iter().zip(&g).map(|(a, b)| a * b).sum();
                    si.partial_cmp(&sj).unwrap()
                })
                .unwrap();
            if !by_mass.contains(&fw) {
                by_mass.push(fw);
            }
            by_mass
        };
        while !support.is_empty() {
            let face: Vec<&Vec<f64>> = support.iter().map(|&p| &verts[p]).collect();
            let weights = face_projection_weights(&face, &theta);
            if let Some(worst) = weights
                .iter()
                .enumerate()
                .filter(|(_, &w)| w < -1e-9)
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
            {
                support.remove(worst);
                continue;
            }
            let mut polished = vec![0.0; m];
            for (&p, &w) in support.iter().zip(&weights) {
                polished[p] = w.max(0.0);
            }
            let total: f64 = polished.iter().sum();
            for l in polished.iter_mut() {
                *l /= total;
            }
            let y_pol = y_of(&polished);
            let better = {
                let dist = |cand: &[f64]| -> f64 {
                    cand.iter()
                        .zip(&theta)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum()
                };
                dist(&y_pol) <= dist(&y)
            };
            if better {
                lambda = polished;
                y = y_pol;
            }
            break;
        }
        if optimality_gap(&y) <= gap_tol {
            break;
        }
    }
    y
}

/// Plain-loop scaled dot-product multi-head attention evaluating the standard
/// formulation directly: `softmax(Q Kᵀ / sqrt(d)) V` per head, heads
/// concatenated, then the output projection. Accumulation order mirrors the
/// library so results are bit-comparable.
pub fn reference_dot_attention(
    x: &[f64],
    seq_len: usize,
    dim: usize,
    n_head: usize,
    w_q: &[f64],
    w_k: &[f64],
    w_v: &[f64],
    w_o: &[f64],
) -> Vec<f64> {
    let mul = |a: &[f64], b: &[f64], m: usize, kk: usize, nn: usize| -> Vec<f64> {
        let mut out = vec![0.0; m * nn];
        for i in 0..m {
            for p in 0..kk {
                for j in 0..nn {
                    out[i * nn + j] += a[i * kk + p] * b[p * nn + j];
                }
            }
        }
        out
    };
    let q = mul(x, w_q, seq_len, dim, dim);
    let k = mul(x, w_k, seq_len, dim, dim);
    let v = mul(x, w_v, seq_len, dim, dim);
    let d = dim / n_head;
    let inv_scale = 1.0 / (d as f64).sqrt();
    let mut concat = vec![0.0; seq_len * dim];
    for h in 0..n_head {
        let lo = h * d;
        let mut scores = vec![0.0; seq_len * seq_len];
        for i in 0..seq_len {
            for p in 0..d {
                for j in 0..seq_len {
                    scores[i * seq_len + j] += q[i * dim + lo + p] * k[j * dim + lo + p];
                }
            }
        }
        for s in scores.iter_mut() {
            *s *= inv_scale;
        }
        let mut weights = vec![0.0; seq_len * seq_len];
        for i in 0..seq_len {
            let row = &scores[i * seq_len..(i + 1) * seq_len];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for j in 0..seq_len {
                let e = (row[j] - max).exp();
                weights[i * seq_len + j] = e;
                total += e;
            }
            for j in 0..seq_len {
                weights[i * seq_len + j] /= total;
            }
        }
        for i in 0..seq_len {
            for p in 0..seq_len {
                for j in 0..d {
                    concat[i * dim + lo + j] +=
                        weights[i * seq_len + p] * v[p * dim + lo + j];
                }
            }
        }
    }
    mul(&concat, w_o, seq_len, dim, dim)
}
