use std::cell::{Ref, RefCell};
use std::fmt;

use super::Tensor;
use crate::error::{Error, Result};

/// Backward rule: given the upstream gradient, the input values and the
/// output value, returns one gradient per input (`None` for no contribution).
pub type BackwardFn = Box<dyn Fn(&Tensor, &[&Tensor], &Tensor) -> Vec<Option<Tensor>>>;

struct Node {
    value: Tensor,
    inputs: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

/// Wengert list for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so every node's inputs precede it.
/// A tape is single-threaded; build one per forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, node: Node) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Records a leaf whose gradient will be reported by [`Tape::backward`].
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(Node {
            value,
            inputs: Vec::new(),
            backward: None,
            requires_grad: true,
        })
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(Node {
            value,
            inputs: Vec::new(),
            backward: None,
            requires_grad: false,
        })
    }

    /// Records the result of a custom operation over `inputs`.
    ///
    /// The backward rule is only stored when at least one input needs a
    /// gradient.
    pub fn record<'t>(&'t self, value: Tensor, inputs: &[Var<'t>], backward: BackwardFn) -> Var<'t> {
        for v in inputs {
            assert!(std::ptr::eq(v.tape, self), "variables from different tapes");
        }
        let requires_grad = {
            let nodes = self.nodes.borrow();
            inputs.iter().any(|v| nodes[v.id].requires_grad)
        };
        self.push(Node {
            value,
            inputs: inputs.iter().map(|v| v.id).collect(),
            backward: requires_grad.then_some(backward),
            requires_grad,
        })
    }

    /// Propagates gradients from `root`, seeded with ones.
    ///
    /// Contributions from multiple uses of a value accumulate additively.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        assert!(std::ptr::eq(root.tape, self), "root belongs to a different tape");
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        let seed = &nodes[root.id].value;
        grads[root.id] = Some(Tensor::from_parts(seed.shape().to_vec(), vec![1.0; seed.len()]));

        for id in (0..=root.id).rev() {
            let node = &nodes[id];
            let Some(rule) = node.backward.as_ref() else {
                continue;
            };
            let Some(upstream) = grads[id].take() else {
                continue;
            };
            let inputs: Vec<&Tensor> = node.inputs.iter().map(|&i| &nodes[i].value).collect();
            let contributions = rule(&upstream, &inputs, &node.value);
            debug_assert_eq!(contributions.len(), node.inputs.len());
            for (&input, contribution) in node.inputs.iter().zip(contributions) {
                let Some(g) = contribution else { continue };
                if !nodes[input].requires_grad {
                    continue;
                }
                if g.shape() != nodes[input].value.shape() {
                    return Err(Error::shape("backward", g.shape(), nodes[input].value.shape()));
                }
                match &mut grads[input] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
            grads[id] = Some(upstream);
        }
        Ok(Gradients { grads })
    }
}

/// Gradients produced by one backward pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Gradient of `var`, or zeros of its shape when nothing flowed into it.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        match self.get(var) {
            Some(g) => g.clone(),
            None => {
                let shape = var.shape();
                let n = shape.iter().product();
                Tensor::from_parts(shape, vec![0.0; n])
            }
        }
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Tensor> {
        Ref::map(self.tape.nodes.borrow(), |nodes| &nodes[self.id].value)
    }

    pub fn to_tensor(&self) -> Tensor {
        self.value().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }
}
