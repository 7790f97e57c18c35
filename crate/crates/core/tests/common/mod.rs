//! Plain nested-loop reference implementations shared by the integration
//! tests. Nothing here touches the tape.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stcx_core::nn::ParamStore;
use stcx_core::tensor::Tensor;

pub type Mat = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn to_mat(t: &Tensor) -> Mat {
    assert_eq!(t.rank(), 2);
    t.data().chunks(t.shape()[1]).map(<[f64]>::to_vec).collect()
}

pub fn from_mat(m: &Mat) -> Tensor {
    Tensor::new([m.len(), m[0].len()], m.concat()).unwrap()
}

pub fn max_diff(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.len(), y.len());
            x.iter().zip(y).map(|(u, v)| (u - v).abs())
        })
        .fold(0.0, f64::max)
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            for p in 0..k {
                out[i][j] += a[i][p] * b[p][j];
            }
        }
    }
    out
}

pub fn param(store: &ParamStore, name: &str) -> Tensor {
    let id = store.find(name).unwrap_or_else(|| panic!("no parameter `{name}`"));
    store.get(id).clone()
}

pub fn linear(x: &Mat, store: &ParamStore, name: &str) -> Mat {
    let w = to_mat(&param(store, &format!("{name}.weight")));
    let b = param(store, &format!("{name}.bias"));
    matmul(x, &w)
        .into_iter()
        .map(|row| row.iter().zip(b.data()).map(|(v, b)| v + b).collect())
        .collect()
}

pub fn layer_norm(x: &Mat, scale: &[f64], shift: &[f64], eps: f64) -> Mat {
    x.iter()
        .map(|row| {
            let d = row.len() as f64;
            let mean = row.iter().sum::<f64>() / d;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
            row.iter()
                .enumerate()
                .map(|(c, v)| (v - mean) / (var + eps).sqrt() * scale[c] + shift[c])
                .collect()
        })
        .collect()
}

pub fn named_layer_norm(x: &Mat, store: &ParamStore, name: &str) -> Mat {
    let scale = param(store, &format!("{name}.scale"));
    let shift = param(store, &format!("{name}.shift"));
    layer_norm(x, scale.data(), shift.data(), stcx_core::nn::LAYER_NORM_EPS)
}

pub fn gelu(x: f64) -> f64 {
    let k = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (k * (x + 0.044715 * x.powi(3))).tanh())
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Scaled dot-product attention over already projected `q`, `k`, `v`, head
/// by head, with explicit loops.
pub fn attention_core(q: &Mat, k: &Mat, v: &Mat, heads: usize) -> (Mat, Vec<Mat>) {
    let dim = q[0].len();
    let hd = dim / heads;
    let mut out = vec![vec![0.0; dim]; q.len()];
    let mut all_weights = Vec::new();
    for h in 0..heads {
        let cols = h * hd..(h + 1) * hd;
        let mut weights = Vec::new();
        for (i, qi) in q.iter().enumerate() {
            let logits: Vec<f64> = k
                .iter()
                .map(|kj| cols.clone().map(|c| qi[c] * kj[c]).sum::<f64>() / (hd as f64).sqrt())
                .collect();
            let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
            let total: f64 = exps.iter().sum();
            let row: Vec<f64> = exps.iter().map(|e| e / total).collect();
            for c in cols.clone() {
                out[i][c] = row.iter().zip(v).map(|(w, vj)| w * vj[c]).sum();
            }
            weights.push(row);
        }
        all_weights.push(weights);
    }
    (out, all_weights)
}

pub fn attention(queries: &Mat, context: &Mat, store: &ParamStore, name: &str, heads: usize) -> Mat {
    let q = linear(queries, store, &format!("{name}.query"));
    let k = linear(context, store, &format!("{name}.key"));
    let v = linear(context, store, &format!("{name}.value"));
    let (merged, _) = attention_core(&q, &k, &v, heads);
    linear(&merged, store, &format!("{name}.output"))
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(u, v)| u + v).collect()).collect()
}

pub fn feed_forward(x: &Mat, store: &ParamStore, name: &str) -> Mat {
    let h: Mat = linear(x, store, &format!("{name}.hidden"))
        .into_iter()
        .map(|row| row.into_iter().map(gelu).collect())
        .collect();
    linear(&h, store, &format!("{name}.output"))
}

/// Pre-norm cross-attention block followed by a pre-norm feed-forward,
/// both residual.
pub fn block(queries: &Mat, context: &Mat, store: &ParamStore, name: &str, heads: usize) -> Mat {
    let normed = named_layer_norm(queries, store, &format!("{name}.norm_attention"));
    let x = add(queries, &attention(&normed, context, store, &format!("{name}.attention"), heads));
    let normed = named_layer_norm(&x, store, &format!("{name}.norm_ffn"));
    add(&x, &feed_forward(&normed, store, &format!("{name}.ffn")))
}

pub fn permute_rows(m: &Mat, order: &[usize]) -> Mat {
    order.iter().map(|&i| m[i].clone()).collect()
}

pub fn shuffled(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}
