use rand::Rng;

use super::{Bound, Linear, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Tensor, Var};

/// Stacks token rows into a `[n × dim]` matrix; an empty token set is an
/// [`Error::EmptyContext`].
pub fn token_matrix(rows: &[Vec<f64>]) -> Result<Tensor> {
    let first = rows.first().ok_or(Error::EmptyContext)?;
    let dim = first.len();
    let mut data = Vec::with_capacity(rows.len() * dim);
    for row in rows {
        if row.len() != dim {
            return Err(Error::shape("token_matrix", &[dim], &[row.len()]));
        }
        data.extend_from_slice(row);
    }
    Tensor::new([rows.len(), dim], data)
}

/// Multi-head scaled dot-product cross attention.
///
/// Queries and context tokens are both `model_dim` wide; each head attends
/// over `model_dim / num_heads` channels with logits scaled by
/// `1 / sqrt(head_dim)`.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub num_heads: usize,
    pub model_dim: usize,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        model_dim: usize,
        num_heads: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if num_heads == 0 || model_dim == 0 || model_dim % num_heads != 0 {
            return Err(Error::Config(format!(
                "model_dim {model_dim} must be a positive multiple of num_heads {num_heads}"
            )));
        }
        Ok(MultiHeadAttention {
            num_heads,
            model_dim,
            query: Linear::new(store, &format!("{name}.query"), model_dim, model_dim, rng),
            key: Linear::new(store, &format!("{name}.key"), model_dim, model_dim, rng),
            value: Linear::new(store, &format!("{name}.value"), model_dim, model_dim, rng),
            output: Linear::new(store, &format!("{name}.output"), model_dim, model_dim, rng),
        })
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.num_heads
    }

    pub fn forward<'t>(&self, params: &Bound<'t>, queries: Var<'t>, context: Var<'t>) -> Result<Var<'t>> {
        self.forward_with_weights(params, queries, context).map(|(out, _)| out)
    }

    /// Also returns the `[n_q × n_kv]` attention weights of every head.
    pub fn forward_with_weights<'t>(
        &self,
        params: &Bound<'t>,
        queries: Var<'t>,
        context: Var<'t>,
    ) -> Result<(Var<'t>, Vec<Tensor>)> {
        for tokens in [queries, context] {
            let shape = tokens.shape();
            if shape.len() != 2 || shape[1] != self.model_dim {
                return Err(Error::shape("multi_head_cross_attention", &shape, &[self.model_dim]));
            }
        }
        let q = self.query.forward(params, queries)?;
        let k = self.key.forward(params, context)?;
        let v = self.value.forward(params, context)?;
        let head_dim = self.head_dim();
        let scale = 1.0 / (head_dim as f64).sqrt();

        let mut heads = Vec::with_capacity(self.num_heads);
        let mut weights = Vec::with_capacity(self.num_heads);
        for h in 0..self.num_heads {
            let start = h * head_dim;
            let qh = q.slice(1, start, head_dim)?;
            let kh = k.slice(1, start, head_dim)?;
            let vh = v.slice(1, start, head_dim)?;
            let attn = qh.matmul_transposed(kh)?.scale(scale).softmax(1)?;
            weights.push(attn.to_tensor());
            heads.push(attn.matmul(vh)?);
        }
        let merged = if heads.len() == 1 { heads[0] } else { Var::concat(&heads, 1)? };
        Ok((self.output.forward(params, merged)?, weights))
    }
}
