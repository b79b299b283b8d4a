use std::cell::RefCell;
use std::rc::Rc;

use super::Tensor;
use crate::error::{Error, Result};

/// Local gradient of one recorded operation.
///
/// Receives the upstream gradient of the node's output and a mask telling which
/// parents need a gradient; returns one entry per parent (`None` when skipped).
pub(crate) type BackwardFn = Box<dyn Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>>>;

struct Node {
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    numel: usize,
    requires_grad: bool,
}

/// Append-only record of operations for reverse-mode differentiation.
///
/// Nodes are pushed in evaluation order, so every parent index is smaller than
/// its child's. A tape is single-threaded; distinct tapes are independent.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// A tensor value recorded on a [`Tape`].
#[derive(Clone)]
pub struct Var<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: usize,
    pub(crate) value: Rc<Tensor>,
    pub(crate) requires_grad: bool,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .field("requires_grad", &self.requires_grad)
            .finish()
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn data(&self) -> &[f64] {
        self.value.data()
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Scalar value of a one-element variable.
    pub fn item(&self) -> Result<f64> {
        self.value
            .item()
            .ok_or_else(|| Error::shape("item", format!("{:?} is not a scalar", self.shape())))
    }

    pub(crate) fn same_tape(&self, other: &Var<'_>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(Error::Tape("operands recorded on different tapes".into()))
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a trainable leaf.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, true)
    }

    /// Registers a leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            parents: Vec::new(),
            backward: None,
            numel: value.numel(),
            requires_grad,
        });
        Var {
            tape: self,
            id,
            value: Rc::new(value),
            requires_grad,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends an operation node. When no parent requires a gradient the
    /// closure is discarded and the result behaves like a constant.
    pub(crate) fn record(&self, value: Rc<Tensor>, parents: &[&Var<'_>], backward: BackwardFn) -> Var<'_> {
        let requires_grad = parents.iter().any(|p| p.requires_grad);
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            parents: if requires_grad {
                parents.iter().map(|p| p.id).collect()
            } else {
                Vec::new()
            },
            backward: requires_grad.then_some(backward),
            numel: value.numel(),
            requires_grad,
        });
        Var {
            tape: self,
            id,
            value,
            requires_grad,
        }
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: &Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(self, loss.tape) {
            return Err(Error::Tape("loss was not recorded on this tape".into()));
        }
        if loss.numel() != 1 {
            return Err(Error::Tape(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss.shape()
            )));
        }
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        if loss.requires_grad {
            grads[loss.id] = Some(vec![1.0]);
        }
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            let Some(upstream) = grads[id].take() else {
                continue;
            };
            let mask: Vec<bool> = node
                .parents
                .iter()
                .map(|&p| nodes[p].requires_grad)
                .collect();
            let local = backward(&upstream, &mask);
            debug_assert_eq!(local.len(), node.parents.len());
            for (&parent, g) in node.parents.iter().zip(local) {
                let Some(g) = g else { continue };
                debug_assert_eq!(g.len(), nodes[parent].numel);
                match &mut grads[parent] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Gradients of a scalar loss with respect to the leaves of a tape.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient for `var`; zeros when the loss does not depend on it.
    pub fn wrt(&self, var: &Var<'_>) -> Tensor {
        match self.grads.get(var.id).and_then(|g| g.as_ref()) {
            Some(g) => Tensor::new(var.shape().to_vec(), g.clone()).expect("gradient shape"),
            None => Tensor::zeros(var.shape().to_vec()),
        }
    }

    /// Whether any gradient reached `var`.
    pub fn touched(&self, var: &Var<'_>) -> bool {
        self.grads.get(var.id).is_some_and(|g| g.is_some())
    }
}
