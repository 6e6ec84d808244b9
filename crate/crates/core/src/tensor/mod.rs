//! Dense 64-bit tensors with tape-based reverse-mode automatic differentiation.
//!
//! The design is deliberately small: row-major `f64` storage, explicit shapes,
//! no broadcasting beyond row vectors against matrices, and a per-step
//! [`Tape`] that records `(inputs, output, backward-fn)` nodes in topological
//! order. Custom backward rules (straight-through estimators, the isotonic
//! ranking Jacobian) plug in through [`custom_grad`].

mod gradcheck;
mod ops;
mod tape;

pub use gradcheck::{finite_diff_gradient, max_rel_error, GradCheckCase, GradCheckReport};
pub use ops::{concat_cols, concat_flat, custom_grad, outer_difference, straight_through};
pub use tape::{Gradients, Tape};

use std::sync::Arc;

use crate::error::{Error, Result};

pub(crate) use tape::NodeRef;

/// Dense tensor: a shape plus a flat row-major array of 64-bit floats.
///
/// Tensors are immutable after creation; clones share storage. A tensor may
/// carry a reference onto a gradient tape, in which case operations on it are
/// recorded for the reverse pass.
#[derive(Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
    requires_grad: bool,
    pub(crate) node: Option<NodeRef>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("requires_grad", &self.requires_grad)
            .field("on_tape", &self.node.is_some())
            .field("data", &self.data)
            .finish()
    }
}

impl Tensor {
    pub fn from_vec(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if numel != data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::BadShape {
                op: "from_vec",
                shape,
                detail: format!("expected positive dims with product {}", data.len()),
            });
        }
        Ok(Tensor {
            shape,
            data: Arc::new(data),
            requires_grad: false,
            node: None,
        })
    }

    /// 1-element tensor holding `value`.
    pub fn scalar(value: f64) -> Self {
        Tensor::from_vec(vec![1], vec![value]).unwrap()
    }

    /// 1-D tensor from a slice.
    pub fn vector(values: &[f64]) -> Self {
        Tensor::from_vec(vec![values.len()], values.to_vec()).unwrap()
    }

    /// 2-D tensor from rows; all rows must have equal length.
    pub fn matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::BadShape {
                op: "matrix",
                shape: vec![m, n],
                detail: "ragged rows".into(),
            });
        }
        Tensor::from_vec(vec![m, n], rows.concat())
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let numel = shape.iter().product();
        Tensor::from_vec(shape, vec![0.0; numel]).unwrap()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_arc(&self) -> Arc<Vec<f64>> {
        Arc::clone(&self.data)
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    /// True when detached from any gradient tape.
    pub fn is_constant(&self) -> bool {
        self.node.is_none()
    }

    pub(crate) fn set_participating(&mut self, requires_grad: bool) {
        self.requires_grad = requires_grad;
    }

    /// Scalar value of a 1-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.numel() != 1 {
            return Err(Error::Contract(format!(
                "item() requires a scalar tensor, got shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    /// Element at `(row, col)` of a 2-D tensor.
    pub fn at(&self, row: usize, col: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[row * self.shape[1] + col]
    }

    /// Constant copy detached from any tape.
    pub fn detach(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: Arc::clone(&self.data),
            requires_grad: false,
            node: None,
        }
    }

    /// Run the reverse pass from this scalar loss and return the gradient map.
    pub fn backward(&self) -> Result<Gradients> {
        let node = self.node.as_ref().ok_or_else(|| {
            Error::Contract("backward: loss is not on any gradient tape".into())
        })?;
        tape::run_backward(&node.tape, self)
    }
}

/// Uniform init on `[-limit, limit)` with `limit = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(
    rows: usize,
    cols: usize,
    rng: &mut impl rand::Rng,
) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.gen_range(-limit..limit))
        .collect();
    Tensor::from_vec(vec![rows, cols], data).unwrap()
}

/// Gaussian init with the given standard deviation.
pub fn normal_init(shape: impl Into<Vec<usize>>, std: f64, rng: &mut impl rand::Rng) -> Tensor {
    let shape = shape.into();
    let numel: usize = shape.iter().product();
    // Box-Muller keeps us independent of distribution-crate version bumps.
    let mut data = Vec::with_capacity(numel);
    while data.len() < numel {
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        data.push(std * r * theta.cos());
        if data.len() < numel {
            data.push(std * r * theta.sin());
        }
    }
    Tensor::from_vec(shape, data).unwrap()
}
