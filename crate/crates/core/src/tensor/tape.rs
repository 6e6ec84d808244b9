//! The gradient tape: an ordered list of `(inputs, output, backward-fn)`
//! records, traversed once in reverse by [`run_backward`].

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Error, Result};

use super::Tensor;

/// Per-input gradients produced by a node's backward function, in input order.
pub(crate) type BackwardFn = Box<dyn Fn(&[f64]) -> Vec<Vec<f64>>>;

pub(crate) struct Node {
    pub inputs: Vec<usize>,
    pub output: usize,
    pub backward: BackwardFn,
}

pub(crate) struct TapeInner {
    /// Shape of every value ever placed on the tape, indexed by value id.
    shapes: Vec<Vec<usize>>,
    /// Whether a gradient must be accumulated for the value.
    needs_grad: Vec<bool>,
    nodes: Vec<Node>,
    consumed: bool,
}

/// Reference from a tensor into its tape.
#[derive(Clone)]
pub(crate) struct NodeRef {
    pub tape: Rc<RefCell<TapeInner>>,
    pub value: usize,
}

/// A single-use gradient tape. Build one per training step, record the
/// forward pass, call [`Tensor::backward`] on the scalar loss, then drop it.
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(RefCell::new(TapeInner {
                shapes: Vec::new(),
                needs_grad: Vec::new(),
                nodes: Vec::new(),
                consumed: false,
            })),
        }
    }

    /// Register `tensor` as a differentiable leaf and return the watched handle.
    /// Gradients accumulate on the handle's tape slot during the reverse pass.
    pub fn watch(&self, tensor: &Tensor) -> Tensor {
        let id = {
            let mut inner = self.inner.borrow_mut();
            inner.alloc(tensor.shape().to_vec(), true)
        };
        let mut out = tensor.clone();
        out.set_participating(true);
        out.node = Some(NodeRef {
            tape: Rc::clone(&self.inner),
            value: id,
        });
        out
    }

    pub fn num_nodes(&self) -> usize {
        self.inner.borrow().nodes.len()
    }
}

impl TapeInner {
    pub fn alloc(&mut self, shape: Vec<usize>, needs_grad: bool) -> usize {
        let id = self.shapes.len();
        self.shapes.push(shape);
        self.needs_grad.push(needs_grad);
        id
    }

    pub fn needs_grad(&self, id: usize) -> bool {
        self.needs_grad[id]
    }

    pub fn push_node(&mut self, node: Node) {
        self.nodes.push(node);
    }
}

/// Ensure every taped operand lives on the same tape; returns it if any.
pub(crate) fn common_tape(inputs: &[&Tensor]) -> Result<Option<Rc<RefCell<TapeInner>>>> {
    let mut found: Option<Rc<RefCell<TapeInner>>> = None;
    for t in inputs {
        if let Some(node) = &t.node {
            match &found {
                None => found = Some(Rc::clone(&node.tape)),
                Some(existing) => {
                    if !Rc::ptr_eq(existing, &node.tape) {
                        return Err(Error::Contract(
                            "operands belong to different gradient tapes".into(),
                        ));
                    }
                }
            }
        }
    }
    Ok(found)
}

/// Record one operation. Inputs without a tape slot are registered as
/// non-differentiable leaves. The node is recorded only when some input needs
/// a gradient; otherwise the output is a plain constant.
pub(crate) fn record(
    tape: &Rc<RefCell<TapeInner>>,
    inputs: &[&Tensor],
    mut output: Tensor,
    build_backward: impl FnOnce(&[bool]) -> BackwardFn,
) -> Tensor {
    let mut inner = tape.borrow_mut();
    let ids: Vec<usize> = inputs
        .iter()
        .map(|t| match &t.node {
            Some(node) => node.value,
            None => inner.alloc(t.shape().to_vec(), false),
        })
        .collect();
    let mask: Vec<bool> = ids.iter().map(|&id| inner.needs_grad(id)).collect();
    if !mask.iter().any(|&b| b) {
        return output;
    }
    let out_id = inner.alloc(output.shape().to_vec(), true);
    inner.push_node(Node {
        inputs: ids,
        output: out_id,
        backward: build_backward(&mask),
    });
    drop(inner);
    output.set_participating(true);
    output.node = Some(NodeRef {
        tape: Rc::clone(tape),
        value: out_id,
    });
    output
}

/// Gradient map produced by the reverse pass, keyed by tape value id.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `tensor`. Participating leaves
    /// that received no flow report zeros; off-tape tensors report `None`.
    pub fn get(&self, tensor: &Tensor) -> Option<Tensor> {
        let node = tensor.node.as_ref()?;
        let id = node.value;
        match &self.grads[id] {
            Some(g) => Some(Tensor::from_vec(self.shapes[id].clone(), g.clone()).unwrap()),
            None => Some(Tensor::zeros(self.shapes[id].clone())),
        }
    }
}

pub(crate) fn run_backward(tape: &Rc<RefCell<TapeInner>>, loss: &Tensor) -> Result<Gradients> {
    if loss.numel() != 1 {
        return Err(Error::Contract(format!(
            "backward: loss must be scalar, got shape {:?}",
            loss.shape()
        )));
    }
    let loss_id = match &loss.node {
        Some(node) if Rc::ptr_eq(&node.tape, tape) => node.value,
        _ => return Err(Error::Contract("backward: loss is not on this tape".into())),
    };

    let mut inner = tape.borrow_mut();
    if inner.consumed {
        return Err(Error::Contract("backward: tape already consumed".into()));
    }
    inner.consumed = true;

    let n_values = inner.shapes.len();
    let mut grads: Vec<Option<Vec<f64>>> = vec![None; n_values];
    grads[loss_id] = Some(vec![1.0]);

    // Nodes are in topological order; one reverse sweep visits each exactly once.
    for node in inner.nodes.iter().rev() {
        let upstream = match &grads[node.output] {
            Some(g) => g,
            None => continue,
        };
        let input_grads = (node.backward)(upstream);
        if input_grads.len() != node.inputs.len() {
            return Err(Error::Contract(format!(
                "backward function returned {} gradients for {} inputs",
                input_grads.len(),
                node.inputs.len()
            )));
        }
        for (&id, grad) in node.inputs.iter().zip(input_grads) {
            if !inner.needs_grad[id] {
                continue;
            }
            let expected: usize = inner.shapes[id].iter().product();
            if grad.len() != expected {
                return Err(Error::BadShape {
                    op: "backward",
                    shape: vec![grad.len()],
                    detail: format!(
                        "backward function produced gradient of length {} for input of shape {:?}",
                        grad.len(),
                        inner.shapes[id]
                    ),
                });
            }
            match &mut grads[id] {
                Some(acc) => {
                    for (a, g) in acc.iter_mut().zip(&grad) {
                        *a += g;
                    }
                }
                None => grads[id] = Some(grad),
            }
        }
    }

    let shapes = inner.shapes.clone();
    inner.nodes.clear();
    Ok(Gradients { grads, shapes })
}
