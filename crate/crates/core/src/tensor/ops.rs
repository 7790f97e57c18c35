//! Differentiable operations on [`Var`]. Forward passes delegate to the
//! value-level methods on [`Tensor`]; each op registers its backward rule.

use super::value::{matmul_into, split_axis};
use super::{Tensor, Var};
use crate::error::{Error, Result};

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

fn gelu_value(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn gelu_derivative(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    let t = u.tanh();
    let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

fn sigmoid_value(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Sums `grad` (shaped like the broadcast result) down to the trailing
/// `suffix` shape.
fn reduce_to_suffix(grad: &Tensor, suffix: &[usize]) -> Tensor {
    let inner: usize = suffix.iter().product();
    let mut out = vec![0.0; inner];
    for chunk in grad.data().chunks_exact(inner) {
        for (o, g) in out.iter_mut().zip(chunk) {
            *o += g;
        }
    }
    Tensor::from_parts(suffix.to_vec(), out)
}

impl<'t> Var<'t> {
    fn unary(self, value: Tensor, backward: impl Fn(&Tensor, &Tensor, &Tensor) -> Tensor + 'static) -> Var<'t> {
        self.tape().record(
            value,
            &[self],
            Box::new(move |g, inputs, out| vec![Some(backward(g, inputs[0], out))]),
        )
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        let value = self.value().zip_map(&other.value(), "add", |a, b| a + b)?;
        Ok(self.tape().record(
            value,
            &[self, other],
            Box::new(|g, _, _| vec![Some(g.clone()), Some(g.clone())]),
        ))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        let value = self.value().zip_map(&other.value(), "sub", |a, b| a - b)?;
        Ok(self.tape().record(
            value,
            &[self, other],
            Box::new(|g, _, _| vec![Some(g.clone()), Some(g.map(|v| -v))]),
        ))
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        let value = self.value().zip_map(&other.value(), "mul", |a, b| a * b)?;
        Ok(self.tape().record(
            value,
            &[self, other],
            Box::new(|g, inputs, _| {
                let ga = g.zip_map(inputs[1], "mul", |g, b| g * b).ok();
                let gb = g.zip_map(inputs[0], "mul", |g, a| g * a).ok();
                vec![ga, gb]
            }),
        ))
    }

    /// `self + other` where `other`'s shape is a trailing suffix of `self`'s
    /// shape (bias rows, per-position embeddings).
    pub fn add_broadcast(self, other: Var<'t>) -> Result<Var<'t>> {
        let (value, suffix) = {
            let x = self.value();
            let y = other.value();
            let (xs, ys) = (x.shape(), y.shape());
            if ys.len() > xs.len() || xs[xs.len() - ys.len()..] != *ys {
                return Err(Error::shape("add_broadcast", xs, ys));
            }
            let inner = y.len();
            let mut data = x.data().to_vec();
            for chunk in data.chunks_exact_mut(inner) {
                for (d, b) in chunk.iter_mut().zip(y.data()) {
                    *d += b;
                }
            }
            (Tensor::from_parts(xs.to_vec(), data), ys.to_vec())
        };
        Ok(self.tape().record(
            value,
            &[self, other],
            Box::new(move |g, _, _| vec![Some(g.clone()), Some(reduce_to_suffix(g, &suffix))]),
        ))
    }

    pub fn scale(self, factor: f64) -> Var<'t> {
        let value = self.value().map(|v| v * factor);
        self.unary(value, move |g, _, _| g.map(|v| v * factor))
    }

    pub fn add_scalar(self, offset: f64) -> Var<'t> {
        let value = self.value().map(|v| v + offset);
        self.unary(value, |g, _, _| g.clone())
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn exp(self) -> Var<'t> {
        let value = self.value().map(f64::exp);
        self.unary(value, |g, _, out| g.zip_map(out, "exp", |g, y| g * y).unwrap())
    }

    pub fn relu(self) -> Var<'t> {
        let value = self.value().map(|v| v.max(0.0));
        self.unary(value, |g, x, _| {
            g.zip_map(x, "relu", |g, x| if x > 0.0 { g } else { 0.0 }).unwrap()
        })
    }

    /// Gaussian error linear unit, tanh approximation.
    pub fn gelu(self) -> Var<'t> {
        let value = self.value().map(gelu_value);
        self.unary(value, |g, x, _| g.zip_map(x, "gelu", |g, x| g * gelu_derivative(x)).unwrap())
    }

    pub fn sigmoid(self) -> Var<'t> {
        let value = self.value().map(sigmoid_value);
        self.unary(value, |g, _, y| g.zip_map(y, "sigmoid", |g, y| g * y * (1.0 - y)).unwrap())
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let value = self.value().matmul(&other.value())?;
        Ok(self.tape().record(
            value,
            &[self, other],
            Box::new(|g, inputs, _| {
                let (a, b) = (inputs[0], inputs[1]);
                let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
                let (ad, bd, gd) = (a.data(), b.data(), g.data());
                // dA = dC · Bᵀ
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    let grow = &gd[i * n..(i + 1) * n];
                    for p in 0..k {
                        let brow = &bd[p * n..(p + 1) * n];
                        da[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                    }
                }
                // dB = Aᵀ · dC
                let mut db = vec![0.0; k * n];
                for i in 0..m {
                    let grow = &gd[i * n..(i + 1) * n];
                    for p in 0..k {
                        let aip = ad[i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        for (o, &gv) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                            *o += aip * gv;
                        }
                    }
                }
                vec![
                    Some(Tensor::from_parts(vec![m, k], da)),
                    Some(Tensor::from_parts(vec![k, n], db)),
                ]
            }),
        ))
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_transposed(self, other: Var<'t>) -> Result<Var<'t>> {
        let value = {
            let (a, b) = (self.value(), other.value());
            if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[1] {
                return Err(Error::shape("matmul_transposed", a.shape(), b.shape()));
            }
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[0]);
            let (ad, bd) = (a.data(), b.data());
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                let arow = &ad[i * k..(i + 1) * k];
                for j in 0..n {
                    let brow = &bd[j * k..(j + 1) * k];
                    out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
                }
            }
            Tensor::from_parts(vec![m, n], out)
        };
        Ok(self.tape().record(
            value,
            &[self, other],
            Box::new(|g, inputs, _| {
                let (a, b) = (inputs[0], inputs[1]);
                let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[0]);
                // dA = dC · B, dB = dCᵀ · A
                let mut da = vec![0.0; m * k];
                matmul_into(g.data(), b.data(), &mut da, m, n, k);
                let mut db = vec![0.0; n * k];
                let (ad, gd) = (a.data(), g.data());
                for i in 0..m {
                    let arow = &ad[i * k..(i + 1) * k];
                    for j in 0..n {
                        let gij = gd[i * n + j];
                        if gij == 0.0 {
                            continue;
                        }
                        for (o, &av) in db[j * k..(j + 1) * k].iter_mut().zip(arow) {
                            *o += gij * av;
                        }
                    }
                }
                vec![
                    Some(Tensor::from_parts(vec![m, k], da)),
                    Some(Tensor::from_parts(vec![n, k], db)),
                ]
            }),
        ))
    }

    pub fn transpose(self) -> Result<Var<'t>> {
        let value = self.value().transpose()?;
        Ok(self.unary(value, |g, _, _| g.transpose().unwrap()))
    }

    pub fn permute(self, axes: &[usize]) -> Result<Var<'t>> {
        let value = self.value().permute(axes)?;
        let mut inverse = vec![0; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        Ok(self.unary(value, move |g, _, _| g.permute(&inverse).unwrap()))
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Var<'t>> {
        let value = self.value().reshape(shape)?;
        Ok(self.unary(value, |g, x, _| g.reshape(x.shape()).unwrap()))
    }

    pub fn concat(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts.first().ok_or_else(|| Error::InvalidShape {
            shape: vec![],
            reason: "concat of zero tensors".into(),
        })?;
        let (value, extents) = {
            let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
            let refs: Vec<&Tensor> = values.iter().map(|v| &**v).collect();
            let value = Tensor::concat(&refs, axis)?;
            (value, refs.iter().map(|t| t.shape()[axis]).collect::<Vec<_>>())
        };
        Ok(first.tape().record(
            value,
            parts,
            Box::new(move |g, _, _| {
                let mut start = 0;
                extents
                    .iter()
                    .map(|&len| {
                        let part = g.slice(axis, start, len).unwrap();
                        start += len;
                        Some(part)
                    })
                    .collect()
            }),
        ))
    }

    pub fn slice(self, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
        let value = self.value().slice(axis, start, len)?;
        Ok(self.unary(value, move |g, x, _| {
            let (outer, extent, inner) = split_axis(x.shape(), axis);
            let mut out = vec![0.0; x.len()];
            for o in 0..outer {
                out[(o * extent + start) * inner..][..len * inner]
                    .copy_from_slice(&g.data()[o * len * inner..][..len * inner]);
            }
            Tensor::from_parts(x.shape().to_vec(), out)
        }))
    }

    pub fn gather(self, axis: usize, indices: &[usize]) -> Result<Var<'t>> {
        let value = self.value().gather(axis, indices)?;
        let indices = indices.to_vec();
        Ok(self.unary(value, move |g, x, _| {
            let (outer, extent, inner) = split_axis(x.shape(), axis);
            let mut out = vec![0.0; x.len()];
            let count = indices.len();
            for o in 0..outer {
                for (slot, &i) in indices.iter().enumerate() {
                    let src = &g.data()[(o * count + slot) * inner..][..inner];
                    for (d, s) in out[(o * extent + i) * inner..][..inner].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
            Tensor::from_parts(x.shape().to_vec(), out)
        }))
    }

    pub fn softmax(self, axis: usize) -> Result<Var<'t>> {
        let value = self.value().softmax(axis)?;
        Ok(self.unary(value, move |g, _, y| {
            let (outer, extent, inner) = split_axis(y.shape(), axis);
            let (gd, yd) = (g.data(), y.data());
            let mut out = vec![0.0; y.len()];
            for o in 0..outer {
                for j in 0..inner {
                    let at = |k: usize| (o * extent + k) * inner + j;
                    let dot: f64 = (0..extent).map(|k| gd[at(k)] * yd[at(k)]).sum();
                    for k in 0..extent {
                        out[at(k)] = yd[at(k)] * (gd[at(k)] - dot);
                    }
                }
            }
            Tensor::from_parts(y.shape().to_vec(), out)
        }))
    }

    pub fn mean(self, axis: usize) -> Result<Var<'t>> {
        let value = self.value().mean_axis(axis)?;
        Ok(self.unary(value, move |g, x, _| {
            let (outer, extent, inner) = split_axis(x.shape(), axis);
            let scale = 1.0 / extent as f64;
            let mut out = vec![0.0; x.len()];
            for o in 0..outer {
                let src = &g.data()[o * inner..][..inner];
                for k in 0..extent {
                    for (d, s) in out[(o * extent + k) * inner..][..inner].iter_mut().zip(src) {
                        *d = s * scale;
                    }
                }
            }
            Tensor::from_parts(x.shape().to_vec(), out)
        }))
    }

    /// Maximum along `axis`; the gradient flows to the first maximal entry.
    pub fn max(self, axis: usize) -> Result<Var<'t>> {
        let (value, argmax) = self.value().max_axis_with_argmax(axis)?;
        Ok(self.unary(value, move |g, x, _| {
            let (outer, extent, inner) = split_axis(x.shape(), axis);
            let mut out = vec![0.0; x.len()];
            for o in 0..outer {
                for j in 0..inner {
                    let slot = o * inner + j;
                    out[(o * extent + argmax[slot]) * inner + j] = g.data()[slot];
                }
            }
            Tensor::from_parts(x.shape().to_vec(), out)
        }))
    }

    pub fn sum_all(self) -> Var<'t> {
        let value = Tensor::scalar(self.value().data().iter().sum());
        self.unary(value, |g, x, _| Tensor::from_parts(x.shape().to_vec(), vec![g.item(); x.len()]))
    }

    pub fn mean_all(self) -> Var<'t> {
        let n = self.value().len() as f64;
        self.sum_all().scale(1.0 / n)
    }

    /// Mean binary cross-entropy between `sigmoid(self)` and `labels`,
    /// evaluated on logits.
    pub fn bce_with_logits(self, labels: &Tensor) -> Result<Var<'t>> {
        let value = {
            let z = self.value();
            if z.shape() != labels.shape() {
                return Err(Error::shape("bce_with_logits", z.shape(), labels.shape()));
            }
            let total: f64 = z
                .data()
                .iter()
                .zip(labels.data())
                .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
                .sum();
            Tensor::scalar(total / z.len() as f64)
        };
        let labels = labels.clone();
        Ok(self.unary(value, move |g, z, _| {
            let scale = g.item() / z.len() as f64;
            z.zip_map(&labels, "bce_with_logits", |z, y| (sigmoid_value(z) - y) * scale)
                .unwrap()
        }))
    }
}
