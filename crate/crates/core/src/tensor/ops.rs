//! Differentiable tensor operations.
//!
//! Every operation computes its forward value eagerly and, when an operand is
//! on a tape, records a backward closure capturing whatever forward data the
//! reverse pass needs.

use std::sync::Arc;

use crate::error::{Error, Result};

use super::tape::{common_tape, record, BackwardFn};
use super::Tensor;

fn shape_mismatch(op: &'static str, lhs: &Tensor, rhs: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: lhs.shape().to_vec(),
        rhs: rhs.shape().to_vec(),
    }
}

fn dims2(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [m, n] => Ok((*m, *n)),
        _ => Err(Error::BadShape {
            op,
            shape: t.shape().to_vec(),
            detail: "expected a 2-D tensor".into(),
        }),
    }
}

fn dims1(op: &'static str, t: &Tensor) -> Result<usize> {
    match t.shape() {
        [n] => Ok(*n),
        _ => Err(Error::BadShape {
            op,
            shape: t.shape().to_vec(),
            detail: "expected a 1-D tensor".into(),
        }),
    }
}

/// Row-major `a[m,k] * b[k,n]`.
pub(crate) fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += aip * brow[j];
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

/// `a[m,n] * b[k,n]^T -> [m,k]` without materializing the transpose.
fn mm_bt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        let orow = &mut out[i * k..(i + 1) * k];
        for (p, o) in orow.iter_mut().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += arow[j] * brow[j];
            }
            *o = acc;
        }
    }
    out
}

/// `a[m,k]^T * b[m,n] -> [k,n]` without materializing the transpose.
fn mm_ta(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for p in 0..m {
        let arow = &a[p * k..(p + 1) * k];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &aval) in arow.iter().enumerate() {
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += aval * brow[j];
            }
        }
    }
    out
}

impl Tensor {
    /// Matrix product of two 2-D tensors with agreeing inner dimensions.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (m, k) = dims2("matmul", self)?;
        let (k2, n) = dims2("matmul", rhs)?;
        if k != k2 {
            return Err(shape_mismatch("matmul", self, rhs));
        }
        let out = Tensor::from_vec(vec![m, n], mm(self.data(), rhs.data(), m, k, n))?;
        let Some(tape) = common_tape(&[self, rhs])? else {
            return Ok(out);
        };
        let a = self.data_arc();
        let b = rhs.data_arc();
        Ok(record(&tape, &[self, rhs], out, |mask| {
            let (need_a, need_b) = (mask[0], mask[1]);
            Box::new(move |u: &[f64]| {
                // dA = U Bᵀ, dB = Aᵀ U
                let da = if need_a { mm_bt(u, &b, m, n, k) } else { Vec::new() };
                let db = if need_b { mm_ta(&a, u, m, k, n) } else { Vec::new() };
                vec![da, db]
            }) as BackwardFn
        }))
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (m, n) = dims2("transpose", self)?;
        let out = Tensor::from_vec(vec![n, m], transpose_raw(self.data(), m, n))?;
        let Some(tape) = common_tape(&[self])? else {
            return Ok(out);
        };
        Ok(record(&tape, &[self], out, |_| {
            Box::new(move |u: &[f64]| vec![transpose_raw(u, n, m)]) as BackwardFn
        }))
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Tensor> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(Error::BadShape {
                op: "reshape",
                shape,
                detail: format!("cannot reshape {} elements", self.numel()),
            });
        }
        let out = Tensor::from_vec(shape, self.data().to_vec())?;
        let Some(tape) = common_tape(&[self])? else {
            return Ok(out);
        };
        Ok(record(&tape, &[self], out, |_| {
            Box::new(move |u: &[f64]| vec![u.to_vec()]) as BackwardFn
        }))
    }

    fn zip_elementwise(
        &self,
        rhs: &Tensor,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
        backward: impl Fn(&[f64], &Arc<Vec<f64>>, &Arc<Vec<f64>>) -> (Vec<f64>, Vec<f64>) + 'static,
    ) -> Result<Tensor> {
        if self.shape() != rhs.shape() {
            return Err(shape_mismatch(op, self, rhs));
        }
        let data = self
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(&a, &b)| f(a, b))
            .collect();
        let out = Tensor::from_vec(self.shape().to_vec(), data)?;
        let Some(tape) = common_tape(&[self, rhs])? else {
            return Ok(out);
        };
        let a = self.data_arc();
        let b = rhs.data_arc();
        Ok(record(&tape, &[self, rhs], out, |_| {
            Box::new(move |u: &[f64]| {
                let (da, db) = backward(u, &a, &b);
                vec![da, db]
            }) as BackwardFn
        }))
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        self.zip_elementwise(rhs, "add", |a, b| a + b, |u, _, _| {
            (u.to_vec(), u.to_vec())
        })
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        self.zip_elementwise(rhs, "sub", |a, b| a - b, |u, _, _| {
            (u.to_vec(), u.iter().map(|g| -g).collect())
        })
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        self.zip_elementwise(
            rhs,
            "mul",
            |a, b| a * b,
            |u, a, b| {
                (
                    u.iter().zip(b.iter()).map(|(g, &y)| g * y).collect(),
                    u.iter().zip(a.iter()).map(|(g, &x)| g * x).collect(),
                )
            },
        )
    }

    fn map_elementwise(
        &self,
        f: impl Fn(f64) -> f64,
        backward: impl Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + 'static,
    ) -> Result<Tensor> {
        let data: Vec<f64> = self.data().iter().map(|&x| f(x)).collect();
        let out = Tensor::from_vec(self.shape().to_vec(), data)?;
        let Some(tape) = common_tape(&[self])? else {
            return Ok(out);
        };
        let x = self.data_arc();
        let y = out.data_arc();
        Ok(record(&tape, &[self], out, |_| {
            Box::new(move |u: &[f64]| vec![backward(u, &x, &y)]) as BackwardFn
        }))
    }

    pub fn neg(&self) -> Result<Tensor> {
        self.scale(-1.0)
    }

    pub fn scale(&self, c: f64) -> Result<Tensor> {
        self.map_elementwise(|x| c * x, move |u, _, _| u.iter().map(|g| c * g).collect())
    }

    pub fn add_scalar(&self, c: f64) -> Result<Tensor> {
        self.map_elementwise(|x| x + c, |u, _, _| u.to_vec())
    }

    /// Absolute value with the subgradient convention `sign(0) = 0`.
    pub fn abs(&self) -> Result<Tensor> {
        self.map_elementwise(f64::abs, |u, x, _| {
            u.iter()
                .zip(x)
                .map(|(g, &v)| {
                    if v > 0.0 {
                        *g
                    } else if v < 0.0 {
                        -g
                    } else {
                        0.0
                    }
                })
                .collect()
        })
    }

    pub fn relu(&self) -> Result<Tensor> {
        self.map_elementwise(
            |x| x.max(0.0),
            |u, x, _| {
                u.iter()
                    .zip(x)
                    .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                    .collect()
            },
        )
    }

    pub fn tanh(&self) -> Result<Tensor> {
        self.map_elementwise(f64::tanh, |u, _, y| {
            u.iter().zip(y).map(|(g, &t)| g * (1.0 - t * t)).collect()
        })
    }

    pub fn sum(&self) -> Result<Tensor> {
        let total = self.data().iter().sum();
        let n = self.numel();
        let out = Tensor::scalar(total);
        let Some(tape) = common_tape(&[self])? else {
            return Ok(out);
        };
        Ok(record(&tape, &[self], out, |_| {
            Box::new(move |u: &[f64]| vec![vec![u[0]; n]]) as BackwardFn
        }))
    }

    pub fn mean(&self) -> Result<Tensor> {
        let n = self.numel();
        let total: f64 = self.data().iter().sum();
        let out = Tensor::scalar(total / n as f64);
        let Some(tape) = common_tape(&[self])? else {
            return Ok(out);
        };
        Ok(record(&tape, &[self], out, |_| {
            Box::new(move |u: &[f64]| vec![vec![u[0] / n as f64; n]]) as BackwardFn
        }))
    }

    /// Row-wise softmax of a 2-D tensor, stabilized by subtracting the row max.
    pub fn row_softmax(&self) -> Result<Tensor> {
        let (m, n) = dims2("row_softmax", self)?;
        if self.data().iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { op: "row_softmax" });
        }
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let row = &self.data()[i * n..(i + 1) * n];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let orow = &mut data[i * n..(i + 1) * n];
            let mut total = 0.0;
            for (o, &x) in orow.iter_mut().zip(row) {
                *o = (x - max).exp();
                total += *o;
            }
            for o in orow.iter_mut() {
                *o /= total;
            }
        }
        let out = Tensor::from_vec(vec![m, n], data)?;
        let Some(tape) = common_tape(&[self])? else {
            return Ok(out);
        };
        let y = out.data_arc();
        Ok(record(&tape, &[self], out, |_| {
            Box::new(move |u: &[f64]| {
                let mut dx = vec![0.0; m * n];
                for i in 0..m {
                    let yr = &y[i * n..(i + 1) * n];
                    let ur = &u[i * n..(i + 1) * n];
                    let dot: f64 = yr.iter().zip(ur).map(|(&a, &b)| a * b).sum();
                    for j in 0..n {
                        dx[i * n + j] = yr[j] * (ur[j] - dot);
                    }
                }
                vec![dx]
            }) as BackwardFn
        }))
    }

    /// Row-wise layer normalization with learnable scale and shift.
    pub fn layer_norm(&self, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
        let (m, n) = dims2("layer_norm", self)?;
        if dims1("layer_norm", gamma)? != n || dims1("layer_norm", beta)? != n {
            return Err(shape_mismatch("layer_norm", self, gamma));
        }
        let mut data = vec![0.0; m * n];
        let mut xhat = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        for i in 0..m {
            let row = &self.data()[i * n..(i + 1) * n];
            let mu = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|&x| (x - mu) * (x - mu)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[i] = is;
            for j in 0..n {
                let xh = (row[j] - mu) * is;
                xhat[i * n + j] = xh;
                data[i * n + j] = gamma.data()[j] * xh + beta.data()[j];
            }
        }
        let out = Tensor::from_vec(vec![m, n], data)?;
        let Some(tape) = common_tape(&[self, gamma, beta])? else {
            return Ok(out);
        };
        let xhat = Arc::new(xhat);
        let inv_std = Arc::new(inv_std);
        let g = gamma.data_arc();
        Ok(record(&tape, &[self, gamma, beta], out, |_| {
            Box::new(move |u: &[f64]| {
                let mut dx = vec![0.0; m * n];
                let mut dg = vec![0.0; n];
                let mut db = vec![0.0; n];
                for i in 0..m {
                    let ur = &u[i * n..(i + 1) * n];
                    let xr = &xhat[i * n..(i + 1) * n];
                    let mut mean_gu = 0.0;
                    let mut mean_gux = 0.0;
                    for j in 0..n {
                        let gu = g[j] * ur[j];
                        mean_gu += gu;
                        mean_gux += gu * xr[j];
                        dg[j] += ur[j] * xr[j];
                        db[j] += ur[j];
                    }
                    mean_gu /= n as f64;
                    mean_gux /= n as f64;
                    for j in 0..n {
                        dx[i * n + j] =
                            (g[j] * ur[j] - mean_gu - xr[j] * mean_gux) * inv_std[i];
                    }
                }
                vec![dx, dg, db]
            }) as BackwardFn
        }))
    }

    /// Divide each row by its sum (clamped below by `floor`). Intended for
    /// non-negative score rows; rows summing to less than `floor` keep the
    /// clamped denominator.
    pub fn row_l1_normalize(&self, floor: f64) -> Result<Tensor> {
        let (m, n) = dims2("row_l1_normalize", self)?;
        let mut data = vec![0.0; m * n];
        let mut denom = vec![0.0; m];
        let mut clamped = vec![false; m];
        for i in 0..m {
            let row = &self.data()[i * n..(i + 1) * n];
            let s: f64 = row.iter().sum();
            let (d, c) = if s < floor { (floor, true) } else { (s, false) };
            denom[i] = d;
            clamped[i] = c;
            for j in 0..n {
                data[i * n + j] = row[j] / d;
            }
        }
        let out = Tensor::from_vec(vec![m, n], data)?;
        let Some(tape) = common_tape(&[self])? else {
            return Ok(out);
        };
        let y = out.data_arc();
        Ok(record(&tape, &[self], out, |_| {
            Box::new(move |u: &[f64]| {
                let mut dx = vec![0.0; m * n];
                for i in 0..m {
                    let ur = &u[i * n..(i + 1) * n];
                    if clamped[i] {
                        for j in 0..n {
                            dx[i * n + j] = ur[j] / denom[i];
                        }
                    } else {
                        let yr = &y[i * n..(i + 1) * n];
                        let dot: f64 = ur.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                        for j in 0..n {
                            dx[i * n + j] = (ur[j] - dot) / denom[i];
                        }
                    }
                }
                vec![dx]
            }) as BackwardFn
        }))
    }

    /// Select entries of a 1-D tensor: `out[i] = self[indices[i]]`.
    /// Indices may repeat; the backward pass scatter-adds.
    pub fn gather(&self, indices: &[usize]) -> Result<Tensor> {
        let n = dims1("gather", self)?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::Contract(format!(
                "gather: index {bad} out of bounds for length {n}"
            )));
        }
        let data: Vec<f64> = indices.iter().map(|&i| self.data()[i]).collect();
        let out = Tensor::from_vec(vec![indices.len()], data)?;
        let Some(tape) = common_tape(&[self])? else {
            return Ok(out);
        };
        let indices = indices.to_vec();
        Ok(record(&tape, &[self], out, |_| {
            Box::new(move |u: &[f64]| {
                let mut dx = vec![0.0; n];
                for (g, &i) in u.iter().zip(&indices) {
                    dx[i] += g;
                }
                vec![dx]
            }) as BackwardFn
        }))
    }

    /// Columns `[start, end)` of a 2-D tensor.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Tensor> {
        let (m, n) = dims2("slice_cols", self)?;
        if start >= end || end > n {
            return Err(Error::Contract(format!(
                "slice_cols: invalid range {start}..{end} for {n} columns"
            )));
        }
        let w = end - start;
        let mut data = Vec::with_capacity(m * w);
        for i in 0..m {
            data.extend_from_slice(&self.data()[i * n + start..i * n + end]);
        }
        let out = Tensor::from_vec(vec![m, w], data)?;
        let Some(tape) = common_tape(&[self])? else {
            return Ok(out);
        };
        Ok(record(&tape, &[self], out, |_| {
            Box::new(move |u: &[f64]| {
                let mut dx = vec![0.0; m * n];
                for i in 0..m {
                    dx[i * n + start..i * n + end].copy_from_slice(&u[i * w..(i + 1) * w]);
                }
                vec![dx]
            }) as BackwardFn
        }))
    }

    /// Add a length-`n` row vector to every row of an `m x n` tensor.
    pub fn add_row_broadcast(&self, row: &Tensor) -> Result<Tensor> {
        let (m, n) = dims2("add_row_broadcast", self)?;
        if dims1("add_row_broadcast", row)? != n {
            return Err(shape_mismatch("add_row_broadcast", self, row));
        }
        let mut data = self.data().to_vec();
        for i in 0..m {
            for j in 0..n {
                data[i * n + j] += row.data()[j];
            }
        }
        let out = Tensor::from_vec(vec![m, n], data)?;
        let Some(tape) = common_tape(&[self, row])? else {
            return Ok(out);
        };
        Ok(record(&tape, &[self, row], out, |_| {
            Box::new(move |u: &[f64]| {
                let mut drow = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        drow[j] += u[i * n + j];
                    }
                }
                vec![u.to_vec(), drow]
            }) as BackwardFn
        }))
    }

    /// `matmul` convenience for a 1-D right operand.
    pub fn matvec(&self, v: &Tensor) -> Result<Tensor> {
        let n = dims1("matvec", v)?;
        let out = self.matmul(&v.reshape(vec![n, 1])?)?;
        let rows = out.shape()[0];
        out.reshape(vec![rows])
    }
}

/// `out[i, j] = a[i] - b[j]` for 1-D operands.
pub fn outer_difference(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let m = dims1("outer_difference", a)?;
    let n = dims1("outer_difference", b)?;
    let mut data = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            data[i * n + j] = a.data()[i] - b.data()[j];
        }
    }
    let out = Tensor::from_vec(vec![m, n], data)?;
    let Some(tape) = common_tape(&[a, b])? else {
        return Ok(out);
    };
    Ok(record(&tape, &[a, b], out, |_| {
        Box::new(move |u: &[f64]| {
            let mut da = vec![0.0; m];
            let mut db = vec![0.0; n];
            for i in 0..m {
                for j in 0..n {
                    da[i] += u[i * n + j];
                    db[j] -= u[i * n + j];
                }
            }
            vec![da, db]
        }) as BackwardFn
    }))
}

/// Concatenate 2-D tensors with equal row counts along the column axis.
pub fn concat_cols(parts: &[Tensor]) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(Error::Contract("concat_cols: no inputs".into()));
    }
    let m = parts[0].shape()[0];
    let widths: Vec<usize> = parts
        .iter()
        .map(|p| {
            let (pm, pn) = dims2("concat_cols", p)?;
            if pm != m {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    lhs: parts[0].shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
            Ok(pn)
        })
        .collect::<Result<_>>()?;
    let total: usize = widths.iter().sum();
    let mut data = Vec::with_capacity(m * total);
    for i in 0..m {
        for (p, &w) in parts.iter().zip(&widths) {
            data.extend_from_slice(&p.data()[i * w..(i + 1) * w]);
        }
    }
    let out = Tensor::from_vec(vec![m, total], data)?;
    let refs: Vec<&Tensor> = parts.iter().collect();
    let Some(tape) = common_tape(&refs)? else {
        return Ok(out);
    };
    let widths_c = widths.clone();
    Ok(record(&tape, &refs, out, |_| {
        Box::new(move |u: &[f64]| {
            let mut grads: Vec<Vec<f64>> =
                widths_c.iter().map(|&w| Vec::with_capacity(m * w)).collect();
            for i in 0..m {
                let mut offset = 0;
                for (g, &w) in grads.iter_mut().zip(&widths_c) {
                    g.extend_from_slice(&u[i * total + offset..i * total + offset + w]);
                    offset += w;
                }
            }
            grads
        }) as BackwardFn
    }))
}

/// Concatenate the flattened inputs in order into a tensor of `shape`.
/// Used to stack per-item scalar losses or assemble score rows.
pub fn concat_flat(parts: &[Tensor], shape: impl Into<Vec<usize>>) -> Result<Tensor> {
    let shape = shape.into();
    if parts.is_empty() {
        return Err(Error::Contract("concat_flat: no inputs".into()));
    }
    let sizes: Vec<usize> = parts.iter().map(Tensor::numel).collect();
    let total: usize = sizes.iter().sum();
    if total != shape.iter().product::<usize>() {
        return Err(Error::BadShape {
            op: "concat_flat",
            shape,
            detail: format!("inputs hold {total} elements"),
        });
    }
    let mut data = Vec::with_capacity(total);
    for p in parts {
        data.extend_from_slice(p.data());
    }
    let out = Tensor::from_vec(shape, data)?;
    let refs: Vec<&Tensor> = parts.iter().collect();
    let Some(tape) = common_tape(&refs)? else {
        return Ok(out);
    };
    Ok(record(&tape, &refs, out, |_| {
        Box::new(move |u: &[f64]| {
            let mut grads = Vec::with_capacity(sizes.len());
            let mut offset = 0;
            for &s in &sizes {
                grads.push(u[offset..offset + s].to_vec());
                offset += s;
            }
            grads
        }) as BackwardFn
    }))
}

/// Register a node with a user-supplied backward rule.
///
/// The forward pass returns `forward_value` unchanged; the reverse pass calls
/// `backward_fn` with the upstream gradient and distributes the returned
/// per-input gradients (which must match each input's element count).
pub fn custom_grad<F>(inputs: &[&Tensor], forward_value: Tensor, backward_fn: F) -> Result<Tensor>
where
    F: Fn(&[f64]) -> Vec<Vec<f64>> + 'static,
{
    let out = forward_value.detach();
    let Some(tape) = common_tape(inputs)? else {
        return Ok(out);
    };
    Ok(record(&tape, inputs, out, |_| {
        Box::new(move |u: &[f64]| backward_fn(u)) as BackwardFn
    }))
}

/// Straight-through node: forward takes the exact `hard` values, backward
/// passes the upstream gradient to `soft` unchanged.
pub fn straight_through(soft: &Tensor, hard: Vec<f64>) -> Result<Tensor> {
    if hard.len() != soft.numel() {
        return Err(Error::BadShape {
            op: "straight_through",
            shape: vec![hard.len()],
            detail: format!("hard values must match soft shape {:?}", soft.shape()),
        });
    }
    let value = Tensor::from_vec(soft.shape().to_vec(), hard)?;
    custom_grad(&[soft], value, |u| vec![u.to_vec()])
}
