use rand::Rng;

use super::{glorot_uniform, Bound, LayerNorm, Linear, MultiHeadAttention, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::Var;

/// Two linear layers with a gelu between them.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub hidden: Linear,
    pub output: Linear,
}

impl FeedForward {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        FeedForward {
            hidden: Linear::new(store, &format!("{name}.hidden"), dim, hidden, rng),
            output: Linear::new(store, &format!("{name}.output"), hidden, dim, rng),
        }
    }

    pub fn forward<'t>(&self, params: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        let h = self.hidden.forward(params, x)?.gelu();
        self.output.forward(params, h)
    }
}

/// Pre-norm cross attention block:
///
/// ```text
/// x   = q + MHA(LN(q), context)
/// out = x + FFN(LN(x))
/// ```
#[derive(Clone, Debug)]
pub struct CrossAttentionBlock {
    pub attention: MultiHeadAttention,
    pub ffn: FeedForward,
    pub norm_attention: LayerNorm,
    pub norm_ffn: LayerNorm,
}

impl CrossAttentionBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        model_dim: usize,
        num_heads: usize,
        ffn_hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let attention = MultiHeadAttention::new(store, &format!("{name}.attention"), model_dim, num_heads, rng)?;
        let ffn = FeedForward::new(store, &format!("{name}.ffn"), model_dim, ffn_hidden, rng);
        Ok(CrossAttentionBlock {
            attention,
            ffn,
            norm_attention: LayerNorm::new(store, &format!("{name}.norm_attention"), model_dim),
            norm_ffn: LayerNorm::new(store, &format!("{name}.norm_ffn"), model_dim),
        })
    }

    pub fn forward<'t>(&self, params: &Bound<'t>, queries: Var<'t>, context: Var<'t>) -> Result<Var<'t>> {
        let normed = self.norm_attention.forward(params, queries)?;
        let x = queries.add(self.attention.forward(params, normed, context)?)?;
        let normed = self.norm_ffn.forward(params, x)?;
        x.add(self.ffn.forward(params, normed)?)
    }
}

/// Learned additive embedding, one row per token position.
#[derive(Clone, Debug)]
pub struct PositionalEmbedding {
    pub table: ParamId,
    pub positions: usize,
    pub dim: usize,
}

impl PositionalEmbedding {
    pub fn new(store: &mut ParamStore, name: &str, positions: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let table = glorot_uniform(rng, positions, dim, &[positions, dim]);
        PositionalEmbedding {
            table: store.add(format!("{name}.table"), table),
            positions,
            dim,
        }
    }

    /// Adds the table to `tokens`, whose trailing `[positions × dim]` extents
    /// must match.
    pub fn forward<'t>(&self, params: &Bound<'t>, tokens: Var<'t>) -> Result<Var<'t>> {
        let shape = tokens.shape();
        if shape.len() < 2 || shape[shape.len() - 2..] != [self.positions, self.dim] {
            return Err(Error::shape("positional_embedding", &shape, &[self.positions, self.dim]));
        }
        tokens.add_broadcast(params[self.table])
    }
}
