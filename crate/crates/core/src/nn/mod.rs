//! Parameterized building blocks shared by the context head.
//!
//! Parameters live in a [`ParamStore`]; modules hold [`ParamId`] handles and
//! read their tensors through a [`Bound`] view of the store recorded on a
//! tape.

mod attention;
mod block;
mod linear;
mod norm;

use std::ops::Index;

use rand::Rng;

use crate::tensor::{Tape, Tensor, Var};

pub use attention::{token_matrix, MultiHeadAttention};
pub use block::{CrossAttentionBlock, FeedForward, PositionalEmbedding};
pub use linear::{linear, Linear};
pub use norm::{layer_norm, LayerNorm, LAYER_NORM_EPS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor under a unique name.
    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter name `{name}`");
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.ids().map(move |id| (id, self.name(id), self.get(id)))
    }

    /// Total number of scalar parameters.
    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn zero_all(&mut self) {
        for t in &mut self.tensors {
            t.data_mut().fill(0.0);
        }
    }

    /// Records every parameter on `tape` as a gradient-tracking leaf.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Bound<'t> {
        Bound {
            vars: self.tensors.iter().map(|t| tape.param(t.clone())).collect(),
        }
    }

    /// Like [`bind`](Self::bind) but substitutes `var` for parameter `id`.
    pub fn bind_with<'t>(&self, tape: &'t Tape, id: ParamId, var: Var<'t>) -> Bound<'t> {
        let mut bound = self.bind(tape);
        bound.vars[id.0] = var;
        bound
    }

    /// Records every parameter as a constant (inference only).
    pub fn bind_frozen<'t>(&self, tape: &'t Tape) -> Bound<'t> {
        Bound {
            vars: self.tensors.iter().map(|t| tape.constant(t.clone())).collect(),
        }
    }
}

/// Parameters of a store recorded on one tape.
pub struct Bound<'t> {
    vars: Vec<Var<'t>>,
}

impl<'t> Bound<'t> {
    pub fn vars(&self) -> &[Var<'t>] {
        &self.vars
    }
}

impl<'t> Index<ParamId> for Bound<'t> {
    type Output = Var<'t>;

    fn index(&self, id: ParamId) -> &Var<'t> {
        &self.vars[id.0]
    }
}

/// Uniform samples in ±sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform(rng: &mut impl Rng, fan_in: usize, fan_out: usize, shape: &[usize]) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::new(shape.to_vec(), data).expect("glorot shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn glorot_is_centered_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = glorot_uniform(&mut rng, 100, 100, &[100, 100]);
        let mean = w.data().iter().sum::<f64>() / w.len() as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        let limit = (6.0f64 / 200.0).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn store_lookup_and_binding() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::full([2], 1.0).unwrap());
        let b = store.add("b", Tensor::full([3], 2.0).unwrap());
        assert_eq!(store.find("b"), Some(b));
        assert_eq!(store.num_values(), 5);
        let tape = Tape::new();
        let bound = store.bind(&tape);
        assert_eq!(bound[a].to_tensor(), *store.get(a));
        assert!(bound[b].requires_grad());
        let frozen = store.bind_frozen(&tape);
        assert!(!frozen[b].requires_grad());
    }

    #[test]
    #[should_panic(expected = "duplicate")]
    fn duplicate_names_rejected() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::scalar(0.0));
        store.add("w", Tensor::scalar(0.0));
    }
}
