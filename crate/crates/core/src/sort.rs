//! Permutation matrices, the SoftSort continuous relaxation, and the
//! straight-through hard permutation.
//!
//! `SoftSort_tau(q) = row_softmax(-|sort_desc(q) 1^T - 1 q^T| / tau)`; the
//! hard counterpart is the exact stable descending argsort of `q`, which
//! coincides with the row-wise argmax of the soft matrix whenever `q` is
//! tie-free and stays a valid permutation under near-ties.

use crate::error::{Error, Result};
use crate::tensor::{outer_difference, straight_through, Tensor};

/// A bijection of `{0, ..., n-1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    indices: Vec<usize>,
}

impl Permutation {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        let n = indices.len();
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n || seen[i] {
                return Err(Error::Bijection(format!(
                    "indices {indices:?} do not form a bijection of 0..{n}"
                )));
            }
            seen[i] = true;
        }
        Ok(Permutation { indices })
    }

    pub fn identity(n: usize) -> Self {
        Permutation {
            indices: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0usize; self.len()];
        for (pos, &i) in self.indices.iter().enumerate() {
            inv[i] = pos;
        }
        Permutation { indices: inv }
    }

    /// Reorder a slice: `out[pos] = v[indices[pos]]`.
    pub fn apply<T: Copy>(&self, v: &[T]) -> Vec<T> {
        self.indices.iter().map(|&i| v[i]).collect()
    }
}

/// Stable descending argsort: position p holds the index of the p-th largest
/// value; ties keep their original order.
pub fn argsort_descending(values: &[f64]) -> Permutation {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
    Permutation { indices: idx }
}

/// Stable ascending argsort.
pub fn argsort_ascending(values: &[f64]) -> Permutation {
    Permutation {
        indices: crate::stats::argsort_stable(values),
    }
}

/// Binary `n x n` matrix with `M[pos, p(pos)] = 1`; exactly one 1 per row and
/// per column.
pub fn permutation_matrix(p: &Permutation) -> Tensor {
    let n = p.len();
    let mut data = vec![0.0; n * n];
    for (pos, &i) in p.indices().iter().enumerate() {
        data[pos * n + i] = 1.0;
    }
    Tensor::from_vec(vec![n, n], data).unwrap()
}

/// Row-stochastic relaxation of the descending-argsort permutation matrix
/// plus its exact hard counterpart.
#[derive(Debug, Clone)]
pub struct SoftPermutation {
    /// `n x n` row-stochastic matrix; row p is a soft assignment of sorted
    /// position p over the original indices. On the tape when `q` was.
    pub soft: Tensor,
    /// Exact stable descending argsort of the generating vector.
    pub hard: Permutation,
    pub tau: f64,
}

/// SoftSort of `q` in descending order at temperature `tau`, with L1 distance.
pub fn soft_sort(q: &Tensor, tau: f64) -> Result<SoftPermutation> {
    if !(tau > 0.0) {
        return Err(Error::Parameter {
            name: "tau",
            requirement: "positive",
            value: tau,
        });
    }
    if q.shape().len() != 1 {
        return Err(Error::BadShape {
            op: "soft_sort",
            shape: q.shape().to_vec(),
            detail: "expected a 1-D tensor".into(),
        });
    }
    if q.data().iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { op: "soft_sort" });
    }
    let hard = argsort_descending(q.data());
    // Gathering the original entries keeps every distance an exact difference
    // of stored values, so soft_sort(q + c) == soft_sort(q) whenever the
    // shifted inputs are exactly representable.
    let sorted = q.gather(hard.indices())?;
    let soft = outer_difference(&sorted, q)?
        .abs()?
        .scale(-1.0 / tau)?
        .row_softmax()?;
    Ok(SoftPermutation { soft, hard, tau })
}

/// How the forward pass of a straight-through sort behaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SortForward {
    /// Exact hard permutation forward, soft gradient backward.
    #[default]
    HardST,
    /// Fully relaxed: the soft product is used as the forward value too.
    /// Finite-difference checks run in this mode.
    Soft,
}

/// Rearrange `v` by the ordering encoded in `sp` (built on `-q` for ascending
/// sorts). Forward per `mode`; gradients always flow through the soft matrix.
pub fn apply_soft_permutation(
    sp: &SoftPermutation,
    v: &Tensor,
    mode: SortForward,
) -> Result<Tensor> {
    let n = sp.hard.len();
    if v.shape() != [n] {
        return Err(Error::ShapeMismatch {
            op: "apply_soft_permutation",
            lhs: vec![n, n],
            rhs: v.shape().to_vec(),
        });
    }
    match mode {
        SortForward::Soft => sp.soft.matvec(v),
        SortForward::HardST => {
            let hard_values = sp.hard.apply(v.data());
            // Off-tape operands need no soft product at all; the straight-
            // through forward value is the hard permutation either way.
            if sp.soft.node.is_none() && v.node.is_none() {
                return Tensor::from_vec(vec![n], hard_values);
            }
            let soft_prod = sp.soft.matvec(v)?;
            straight_through(&soft_prod, hard_values)
        }
    }
}

/// Sort `v` by the ascending order of `q` (straight-through).
///
/// The forward value is exactly `v` permuted by the stable ascending argsort
/// of `q`; the backward pass treats the product with the soft matrix of `-q`
/// as if it had been used directly.
pub fn apply_ascending(q: &Tensor, v: &Tensor, tau: f64) -> Result<Tensor> {
    apply_ascending_mode(q, v, tau, SortForward::HardST)
}

pub fn apply_ascending_mode(
    q: &Tensor,
    v: &Tensor,
    tau: f64,
    mode: SortForward,
) -> Result<Tensor> {
    if q.shape() != v.shape() {
        return Err(Error::ShapeMismatch {
            op: "apply_ascending",
            lhs: q.shape().to_vec(),
            rhs: v.shape().to_vec(),
        });
    }
    let sp = soft_sort(&q.neg()?, tau)?;
    apply_soft_permutation(&sp, v, mode)
}
