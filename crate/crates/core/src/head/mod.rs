//! The spatio-temporal context head and its ablation variants.

mod optim;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use optim::Sgd;

use crate::error::{Error, Result};
use crate::features::{ActorFeature, ContextMaps};
use crate::nn::{Bound, CrossAttentionBlock, Linear, ParamStore, PositionalEmbedding};
use crate::tensor::{Tape, Tensor, Var};

/// Head wiring. The first element of each pair names the context, the
/// second whether actor queries keep their 7×7 spatial layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Classifier on the mean-pooled actor feature, no attention.
    Baseline,
    /// One block over the channel concatenation of both temporally pooled maps.
    SpatialCtx,
    SpatialCtxSpatialActors,
    /// Block over temporally pooled slow tokens, then block over spatially
    /// pooled fast tokens.
    SpatioTemporalCtx,
    SpatioTemporalCtxSpatialActors,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Baseline,
        Variant::SpatialCtx,
        Variant::SpatialCtxSpatialActors,
        Variant::SpatioTemporalCtx,
        Variant::SpatioTemporalCtxSpatialActors,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::SpatialCtx => "spatial_ctx",
            Variant::SpatialCtxSpatialActors => "spatial_ctx+spatial_actors",
            Variant::SpatioTemporalCtx => "spatiotemporal_ctx",
            Variant::SpatioTemporalCtxSpatialActors => "spatiotemporal_ctx+spatial_actors",
        }
    }

    pub fn spatial_actors(self) -> bool {
        matches!(
            self,
            Variant::SpatialCtxSpatialActors | Variant::SpatioTemporalCtxSpatialActors
        )
    }

    pub fn uses_temporal_context(self) -> bool {
        matches!(
            self,
            Variant::SpatioTemporalCtx | Variant::SpatioTemporalCtxSpatialActors
        )
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown ablation variant `{s}`")))
    }
}

/// Dimensions and wiring flags of a [`ContextHead`].
#[derive(Clone, Debug, PartialEq)]
pub struct HeadConfig {
    pub variant: Variant,
    pub slow_channels: usize,
    pub fast_channels: usize,
    pub num_heads: usize,
    pub ffn_hidden: usize,
    pub num_classes: usize,
    /// Number of slow context tokens, `H·W`.
    pub slow_tokens: usize,
    /// Number of fast context tokens, `T_f`.
    pub fast_tokens: usize,
    /// Actor tokens per box (7×7).
    pub actor_tokens: usize,
    pub actor_positional: bool,
    pub slow_positional: bool,
    pub fast_positional: bool,
}

impl HeadConfig {
    /// Width of actor tokens and of every attention block.
    pub fn model_dim(&self) -> usize {
        self.slow_channels + self.fast_channels
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("slow_channels", self.slow_channels),
            ("fast_channels", self.fast_channels),
            ("num_heads", self.num_heads),
            ("ffn_hidden", self.ffn_hidden),
            ("num_classes", self.num_classes),
            ("slow_tokens", self.slow_tokens),
            ("fast_tokens", self.fast_tokens),
            ("actor_tokens", self.actor_tokens),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.model_dim() % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "model_dim {} is not divisible by num_heads {}",
                self.model_dim(),
                self.num_heads
            )));
        }
        Ok(())
    }
}

/// Per-clip inputs: actor token grids and the three context token sets.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadInput {
    /// `[N × 49 × C]`
    pub actors: Tensor,
    /// `[(H·W) × C_s]`
    pub slow_tokens: Tensor,
    /// `[T_f × C_f]`
    pub fast_tokens: Tensor,
    /// `[(H·W) × C]`
    pub concat_tokens: Tensor,
}

impl HeadInput {
    pub fn new(actors: &[ActorFeature], maps: &ContextMaps) -> Result<Self> {
        let first = actors.first().ok_or_else(|| Error::InvalidShape {
            shape: vec![0],
            reason: "head input needs at least one actor".into(),
        })?;
        let tokens: Vec<&Tensor> = actors.iter().map(|a| &a.tokens).collect();
        let stacked = Tensor::concat(&tokens, 0)?;
        let (g, c) = (first.tokens.shape()[0], first.tokens.shape()[1]);
        Ok(HeadInput {
            actors: stacked.reshape([actors.len(), g, c])?,
            slow_tokens: maps.slow_tokens.clone(),
            fast_tokens: maps.fast_tokens.clone(),
            concat_tokens: maps.concat_tokens(),
        })
    }

    pub fn num_actors(&self) -> usize {
        self.actors.shape()[0]
    }
}

/// Which attention blocks ran and how many key/value tokens each saw.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ForwardTrace {
    pub attention_calls: usize,
    pub kv_tokens: Vec<usize>,
}

/// Per-channel maximum over token positions: `[G × C] → [C]`.
pub fn global_max_pool<'t>(tokens: Var<'t>) -> Result<Var<'t>> {
    tokens.max(0)
}

/// Mean binary cross-entropy of `sigmoid(logits)` against 0/1 `labels`.
pub fn bce_loss<'t>(logits: Var<'t>, labels: &Tensor) -> Result<Var<'t>> {
    if labels.data().iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::Config("labels must be 0 or 1".into()));
    }
    logits.bce_with_logits(labels)
}

/// Actor/context cross-attention head with a two-layer multi-label classifier.
#[derive(Clone, Debug)]
pub struct ContextHead {
    config: HeadConfig,
    params: ParamStore,
    slow_projection: Option<Linear>,
    fast_projection: Option<Linear>,
    actor_embedding: Option<PositionalEmbedding>,
    slow_embedding: Option<PositionalEmbedding>,
    fast_embedding: Option<PositionalEmbedding>,
    block_spatial: Option<CrossAttentionBlock>,
    block_temporal: Option<CrossAttentionBlock>,
    classifier_hidden: Linear,
    classifier_out: Linear,
}

impl ContextHead {
    /// Deterministic initialization from `seed`. The output layer starts at
    /// zero so a fresh head scores every class at exactly 0.5.
    pub fn new(config: HeadConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let dim = config.model_dim();
        let variant = config.variant;
        let spatial_actors = variant.spatial_actors();
        let temporal = variant.uses_temporal_context();
        let attends = variant != Variant::Baseline;

        let slow_projection =
            temporal.then(|| Linear::new(&mut params, "slow_projection", config.slow_channels, dim, &mut rng));
        let fast_projection =
            temporal.then(|| Linear::new(&mut params, "fast_projection", config.fast_channels, dim, &mut rng));
        let actor_embedding = (attends && spatial_actors && config.actor_positional).then(|| {
            PositionalEmbedding::new(&mut params, "actor_embedding", config.actor_tokens, dim, &mut rng)
        });
        let slow_embedding = (attends && config.slow_positional)
            .then(|| PositionalEmbedding::new(&mut params, "slow_embedding", config.slow_tokens, dim, &mut rng));
        let fast_embedding = (temporal && config.fast_positional)
            .then(|| PositionalEmbedding::new(&mut params, "fast_embedding", config.fast_tokens, dim, &mut rng));
        let block_spatial = attends
            .then(|| {
                CrossAttentionBlock::new(&mut params, "block_spatial", dim, config.num_heads, config.ffn_hidden, &mut rng)
            })
            .transpose()?;
        let block_temporal = temporal
            .then(|| {
                CrossAttentionBlock::new(&mut params, "block_temporal", dim, config.num_heads, config.ffn_hidden, &mut rng)
            })
            .transpose()?;
        let classifier_hidden = Linear::new(&mut params, "classifier_hidden", dim, dim, &mut rng);
        let classifier_out = Linear::zeroed(&mut params, "classifier_out", dim, config.num_classes);

        Ok(ContextHead {
            config,
            params,
            slow_projection,
            fast_projection,
            actor_embedding,
            slow_embedding,
            fast_embedding,
            block_spatial,
            block_temporal,
            classifier_hidden,
            classifier_out,
        })
    }

    pub fn config(&self) -> &HeadConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Replaces all parameters; names and shapes must match this head's layout.
    pub fn load_params(&mut self, params: ParamStore) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, found {}",
                self.params.len(),
                params.len()
            )));
        }
        for ((_, name, t), (_, other_name, other)) in self.params.iter().zip(params.iter()) {
            if name != other_name || t.shape() != other.shape() {
                return Err(Error::Config(format!(
                    "parameter mismatch: expected `{name}` {:?}, found `{other_name}` {:?}",
                    t.shape(),
                    other.shape()
                )));
            }
        }
        self.params = params;
        Ok(())
    }

    fn check_input(&self, input: &HeadInput) -> Result<()> {
        let c = &self.config;
        let a = input.actors.shape();
        if a.len() != 3 || a[1] != c.actor_tokens || a[2] != c.model_dim() {
            return Err(Error::shape("head_forward actors", a, &[0, c.actor_tokens, c.model_dim()]));
        }
        let expect = [
            (&input.slow_tokens, c.slow_tokens, c.slow_channels),
            (&input.fast_tokens, c.fast_tokens, c.fast_channels),
            (&input.concat_tokens, c.slow_tokens, c.model_dim()),
        ];
        for (t, rows, cols) in expect {
            if t.shape() != [rows, cols] {
                return Err(Error::shape("head_forward context", t.shape(), &[rows, cols]));
            }
        }
        Ok(())
    }

    /// Logits `[N × num_classes]` for one clip.
    pub fn forward<'t>(&self, tape: &'t Tape, params: &Bound<'t>, input: &HeadInput) -> Result<Var<'t>> {
        self.forward_traced(tape, params, input, &mut ForwardTrace::default())
    }

    pub fn forward_traced<'t>(
        &self,
        tape: &'t Tape,
        params: &Bound<'t>,
        input: &HeadInput,
        trace: &mut ForwardTrace,
    ) -> Result<Var<'t>> {
        self.check_input(input)?;
        let n = input.num_actors();
        let dim = self.config.model_dim();
        let actors = tape.constant(input.actors.clone());

        let pooled = match self.variant() {
            Variant::Baseline => actors.mean(1)?,
            variant => {
                let (queries, group) = if variant.spatial_actors() {
                    let q = match &self.actor_embedding {
                        Some(pe) => pe.forward(params, actors)?,
                        None => actors,
                    };
                    (q.reshape([n * self.config.actor_tokens, dim])?, self.config.actor_tokens)
                } else {
                    (actors.mean(1)?, 1)
                };

                let spatial_context = if variant.uses_temporal_context() {
                    let proj = self.slow_projection.as_ref().expect("temporal variant has projections");
                    proj.forward(params, tape.constant(input.slow_tokens.clone()))?
                } else {
                    tape.constant(input.concat_tokens.clone())
                };
                let spatial_context = match &self.slow_embedding {
                    Some(pe) => pe.forward(params, spatial_context)?,
                    None => spatial_context,
                };
                let block = self.block_spatial.as_ref().expect("attending variant has a spatial block");
                trace.attention_calls += 1;
                trace.kv_tokens.push(spatial_context.shape()[0]);
                let mut enriched = block.forward(params, queries, spatial_context)?;

                if let (Some(proj), Some(block)) = (&self.fast_projection, &self.block_temporal) {
                    let fast_context = proj.forward(params, tape.constant(input.fast_tokens.clone()))?;
                    let fast_context = match &self.fast_embedding {
                        Some(pe) => pe.forward(params, fast_context)?,
                        None => fast_context,
                    };
                    trace.attention_calls += 1;
                    trace.kv_tokens.push(fast_context.shape()[0]);
                    enriched = block.forward(params, enriched, fast_context)?;
                }
                enriched.reshape([n, group, dim])?.max(1)?
            }
        };

        let hidden = self.classifier_hidden.forward(params, pooled)?.gelu();
        self.classifier_out.forward(params, hidden)
    }

    /// Sigmoid scores `[N × num_classes]` with parameters held constant.
    pub fn predict(&self, input: &HeadInput) -> Result<Tensor> {
        let tape = Tape::new();
        let params = self.params.bind_frozen(&tape);
        Ok(self.forward(&tape, &params, input)?.sigmoid().to_tensor())
    }

    /// Mean BCE over every actor-class cell of a batch of clips, and its
    /// gradient for every parameter in store order.
    pub fn loss_and_grads(&self, batch: &[(&HeadInput, &Tensor)]) -> Result<(f64, Vec<Tensor>)> {
        let tape = Tape::new();
        let params = self.params.bind(&tape);
        let mut logits = Vec::with_capacity(batch.len());
        let mut labels = Vec::with_capacity(batch.len());
        for (input, y) in batch {
            logits.push(self.forward(&tape, &params, input)?);
            labels.push(*y);
        }
        let logits = if logits.len() == 1 { logits[0] } else { Var::concat(&logits, 0)? };
        let labels = Tensor::concat(&labels, 0)?;
        let loss = bce_loss(logits, &labels)?;
        let grads = tape.backward(loss)?;
        let value = loss.value().item();
        Ok((value, params.vars().iter().map(|v| grads.wrt(*v)).collect()))
    }
}
