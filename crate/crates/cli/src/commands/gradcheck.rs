//! Finite-difference check of every parameterized component and of a small
//! full head.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stcx_core::head::{bce_loss, ContextHead, HeadConfig, HeadInput, Variant};
use stcx_core::nn::{
    Bound, CrossAttentionBlock, FeedForward, LayerNorm, Linear, MultiHeadAttention, ParamStore, PositionalEmbedding,
};
use stcx_core::tensor::{grad_check, Tape, Tensor, Var};
use stcx_core::Result;

use crate::error::CliResult;

pub const EPS: f64 = 1e-5;
/// Tolerance for components that are linear in the checked tensor.
pub const LINEAR_TOLERANCE: f64 = 1e-8;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckLine {
    pub component: String,
    pub tensor: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheckLine {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckSummary {
    pub lines: Vec<GradCheckLine>,
}

impl GradCheckSummary {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(GradCheckLine::passed)
    }

    /// Worst error per component, in first-seen order.
    pub fn per_component(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = Vec::new();
        for l in &self.lines {
            match out.iter_mut().find(|(c, _)| *c == l.component) {
                Some((_, e)) => *e = e.max(l.max_rel_error),
                None => out.push((l.component.clone(), l.max_rel_error)),
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# finite differences, eps {EPS:e}\ncomponent,tensor,max_rel_error,tolerance,status\n");
        for l in &self.lines {
            let status = if l.passed() { "pass" } else { "FAIL" };
            writeln!(s, "{},{},{:.3e},{:e},{status}", l.component, l.tensor, l.max_rel_error, l.tolerance).unwrap();
        }
        for (c, e) in self.per_component() {
            writeln!(s, "# {c}: max {e:.3e}").unwrap();
        }
        writeln!(s, "overall,{}", if self.passed() { "pass" } else { "FAIL" }).unwrap();
        s
    }
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("positive extents")
}

/// Reduces to a scalar with fixed, non-uniform weights so that every output
/// coordinate contributes differently.
fn project<'t>(y: Var<'t>) -> Result<Var<'t>> {
    let shape = y.shape();
    let n: usize = shape.iter().product();
    let w = Tensor::new(shape, (0..n).map(|i| (1.3 * i as f64 + 0.7).cos()).collect())?;
    Ok(y.mul(y.tape().constant(w))?.sum_all())
}

struct Checker {
    summary: GradCheckSummary,
}

impl Checker {
    fn record(&mut self, component: &str, tensor: &str, tolerance: f64, report: Result<f64>) {
        let max_rel_error = report.unwrap_or(f64::INFINITY);
        self.summary.lines.push(GradCheckLine {
            component: component.into(),
            tensor: tensor.into(),
            max_rel_error,
            tolerance,
        });
    }

    /// Checks every parameter of `store` under `f`.
    fn params<F>(&mut self, component: &str, store: &ParamStore, tolerance: impl Fn(&str) -> f64, f: F)
    where
        F: for<'t> Fn(&'t Tape, &Bound<'t>) -> Result<Var<'t>>,
    {
        for (id, name, t) in store.iter() {
            let report = grad_check(|tape, x| f(tape, &store.bind_with(tape, id, x)), t, EPS);
            self.record(component, name, tolerance(name), report.map(|r| r.max_rel_error));
        }
    }

    /// Checks one input tensor of `f`.
    fn input<F>(&mut self, component: &str, label: &str, x: &Tensor, store: &ParamStore, tolerance: f64, f: F)
    where
        F: for<'t> Fn(&'t Tape, &Bound<'t>, Var<'t>) -> Result<Var<'t>>,
    {
        let report = grad_check(|tape, v| f(tape, &store.bind_frozen(tape), v), x, EPS);
        self.record(component, label, tolerance, report.map(|r| r.max_rel_error));
    }
}

fn head_fixture(rng: &mut ChaCha8Rng) -> CliResult<(ContextHead, HeadInput, Tensor)> {
    let config = HeadConfig {
        variant: Variant::SpatioTemporalCtxSpatialActors,
        slow_channels: 4,
        fast_channels: 2,
        num_heads: 2,
        ffn_hidden: 8,
        num_classes: 3,
        slow_tokens: 4,
        fast_tokens: 3,
        actor_tokens: 4,
        actor_positional: true,
        slow_positional: true,
        fast_positional: true,
    };
    let mut head = ContextHead::new(config, rng.gen())?;
    // The output layer starts at zero, which would hide every upstream gradient.
    let store = head.params_mut();
    for name in ["classifier_out.weight", "classifier_out.bias"] {
        let id = store.find(name).expect("head has an output layer");
        let shape = store.get(id).shape().to_vec();
        *store.get_mut(id) = random(rng, &shape);
    }
    let input = HeadInput {
        actors: random(rng, &[2, 4, 6]),
        slow_tokens: random(rng, &[4, 4]),
        fast_tokens: random(rng, &[3, 2]),
        concat_tokens: random(rng, &[4, 6]),
    };
    let labels = Tensor::new([2, 3], vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0])?;
    Ok((head, input, labels))
}

pub fn run_gradcheck(seed: u64) -> CliResult<GradCheckSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = Checker {
        summary: GradCheckSummary::default(),
    };
    let (dim, heads, hidden) = (6, 2, 8);
    let queries = random(&mut rng, &[5, dim]);
    let context = random(&mut rng, &[4, dim]);

    let mut store = ParamStore::new();
    let linear = Linear::new(&mut store, "linear", dim, 3, &mut rng);
    c.params("linear", &store, |_| LINEAR_TOLERANCE, |t, p| project(linear.forward(p, t.constant(queries.clone()))?));
    c.input("linear", "input", &queries, &store, LINEAR_TOLERANCE, |_, p, x| project(linear.forward(p, x)?));

    let mut store = ParamStore::new();
    let embedding = PositionalEmbedding::new(&mut store, "positional_embedding", 5, dim, &mut rng);
    c.params("positional_embedding", &store, |_| LINEAR_TOLERANCE, |t, p| {
        project(embedding.forward(p, t.constant(queries.clone()))?)
    });

    let mut store = ParamStore::new();
    let norm = LayerNorm::new(&mut store, "layer_norm", dim);
    // Perturb the affine parameters away from the identity.
    for id in store.ids().collect::<Vec<_>>() {
        let noise = random(&mut rng, &[dim]);
        let t = store.get_mut(id);
        *t = t.zip_map(&noise, "perturb", |a, b| a + 0.5 * b).expect("same shape");
    }
    let ln_tol = |name: &str| if name.ends_with("shift") { LINEAR_TOLERANCE } else { TOLERANCE };
    c.params("layer_norm", &store, ln_tol, |t, p| project(norm.forward(p, t.constant(queries.clone()))?));
    c.input("layer_norm", "input", &queries, &store, TOLERANCE, |_, p, x| project(norm.forward(p, x)?));

    let mut store = ParamStore::new();
    let ffn = FeedForward::new(&mut store, "feed_forward", dim, hidden, &mut rng);
    let ffn_tol = |name: &str| if name.starts_with("feed_forward.output") { LINEAR_TOLERANCE } else { TOLERANCE };
    c.params("feed_forward", &store, ffn_tol, |t, p| project(ffn.forward(p, t.constant(queries.clone()))?));
    c.input("feed_forward", "input", &queries, &store, TOLERANCE, |_, p, x| project(ffn.forward(p, x)?));

    let mut store = ParamStore::new();
    let mha = MultiHeadAttention::new(&mut store, "attention", dim, heads, &mut rng)?;
    c.params("attention", &store, |_| TOLERANCE, |t, p| {
        project(mha.forward(p, t.constant(queries.clone()), t.constant(context.clone()))?)
    });
    c.input("attention", "queries", &queries, &store, TOLERANCE, |t, p, x| {
        project(mha.forward(p, x, t.constant(context.clone()))?)
    });
    c.input("attention", "context", &context, &store, TOLERANCE, |t, p, x| {
        project(mha.forward(p, t.constant(queries.clone()), x)?)
    });

    let mut store = ParamStore::new();
    let block = CrossAttentionBlock::new(&mut store, "cross_attention_block", dim, heads, hidden, &mut rng)?;
    c.params("cross_attention_block", &store, |_| TOLERANCE, |t, p| {
        project(block.forward(p, t.constant(queries.clone()), t.constant(context.clone()))?)
    });
    c.input("cross_attention_block", "queries", &queries, &store, TOLERANCE, |t, p, x| {
        project(block.forward(p, x, t.constant(context.clone()))?)
    });
    c.input("cross_attention_block", "context", &context, &store, TOLERANCE, |t, p, x| {
        project(block.forward(p, t.constant(queries.clone()), x)?)
    });

    let (head, input, labels) = head_fixture(&mut rng)?;
    c.params("head", head.params(), |_| TOLERANCE, |t, p| bce_loss(head.forward(t, p, &input)?, &labels));

    Ok(c.summary)
}
