use rand::Rng;

use super::{glorot_uniform, Bound, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Tensor, Var};

/// `x · weight + bias` for `x` of shape `[n × in]`.
pub fn linear<'t>(x: Var<'t>, weight: Var<'t>, bias: Var<'t>) -> Result<Var<'t>> {
    let (xs, ws) = (x.shape(), weight.shape());
    if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
        return Err(Error::shape("linear", &xs, &ws));
    }
    x.matmul(weight)?.add_broadcast(bias)
}

/// Affine layer with weight `[in × out]` and bias `[out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    /// Glorot-uniform weight, zero bias.
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let weight = glorot_uniform(rng, in_dim, out_dim, &[in_dim, out_dim]);
        Self::with_weight(store, name, weight)
    }

    /// Zero weight and bias: the layer outputs zeros until trained.
    pub fn zeroed(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize) -> Self {
        let weight = Tensor::zeros([in_dim, out_dim]).expect("positive dims");
        Self::with_weight(store, name, weight)
    }

    fn with_weight(store: &mut ParamStore, name: &str, weight: Tensor) -> Self {
        let (in_dim, out_dim) = (weight.shape()[0], weight.shape()[1]);
        let weight = store.add(format!("{name}.weight"), weight);
        let bias = store.add(format!("{name}.bias"), Tensor::zeros([out_dim]).expect("positive dims"));
        Linear {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward<'t>(&self, params: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        linear(x, params[self.weight], params[self.bias])
    }
}
