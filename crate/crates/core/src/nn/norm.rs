use super::{Bound, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Tensor, Var};

/// Variance guard. Small enough that normalized rows of unit-scale data have
/// variance within 1e-6 of one.
pub const LAYER_NORM_EPS: f64 = 1e-8;

struct RowStats {
    normalized: Vec<f64>,
    inv_std: Vec<f64>,
}

fn row_stats(x: &Tensor, eps: f64) -> RowStats {
    let d = x.shape()[1];
    let mut normalized = Vec::with_capacity(x.len());
    let mut inv_std = Vec::with_capacity(x.shape()[0]);
    for row in x.data().chunks_exact(d) {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + eps).sqrt();
        normalized.extend(row.iter().map(|v| (v - mean) * inv));
        inv_std.push(inv);
    }
    RowStats { normalized, inv_std }
}

/// Per-row normalization to zero mean and unit (population) variance,
/// followed by an elementwise affine map.
pub fn layer_norm<'t>(x: Var<'t>, scale: Var<'t>, shift: Var<'t>, eps: f64) -> Result<Var<'t>> {
    let value = {
        let (xv, sv, bv) = (x.value(), scale.value(), shift.value());
        if xv.rank() != 2 || sv.shape() != [xv.shape()[1]] || bv.shape() != sv.shape() {
            return Err(Error::shape("layer_norm", xv.shape(), sv.shape()));
        }
        let d = xv.shape()[1];
        let stats = row_stats(&xv, eps);
        let data = stats
            .normalized
            .chunks_exact(d)
            .flat_map(|row| {
                row.iter()
                    .zip(sv.data().iter().zip(bv.data()))
                    .map(|(n, (s, b))| n * s + b)
            })
            .collect();
        Tensor::new(xv.shape().to_vec(), data)?
    };
    Ok(x.tape().record(
        value,
        &[x, scale, shift],
        Box::new(move |g, inputs, _| {
            let (xv, sv) = (inputs[0], inputs[1]);
            let d = xv.shape()[1];
            let stats = row_stats(xv, eps);
            let mut dx = vec![0.0; xv.len()];
            let mut dscale = vec![0.0; d];
            let mut dshift = vec![0.0; d];
            for (r, (grow, nrow)) in g.data().chunks_exact(d).zip(stats.normalized.chunks_exact(d)).enumerate() {
                let mut mean_dn = 0.0;
                let mut mean_dn_n = 0.0;
                for j in 0..d {
                    dscale[j] += grow[j] * nrow[j];
                    dshift[j] += grow[j];
                    let dn = grow[j] * sv.data()[j];
                    mean_dn += dn;
                    mean_dn_n += dn * nrow[j];
                }
                mean_dn /= d as f64;
                mean_dn_n /= d as f64;
                let inv = stats.inv_std[r];
                for j in 0..d {
                    let dn = grow[j] * sv.data()[j];
                    dx[r * d + j] = inv * (dn - mean_dn - nrow[j] * mean_dn_n);
                }
            }
            vec![
                Some(Tensor::new(xv.shape().to_vec(), dx).unwrap()),
                Some(Tensor::new([d], dscale).unwrap()),
                Some(Tensor::new([d], dshift).unwrap()),
            ]
        }),
    ))
}

/// Layer normalization parameters: scale initialized to one, shift to zero.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub scale: ParamId,
    pub shift: ParamId,
    pub dim: usize,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        LayerNorm {
            scale: store.add(format!("{name}.scale"), Tensor::ones([dim]).expect("positive dim")),
            shift: store.add(format!("{name}.shift"), Tensor::zeros([dim]).expect("positive dim")),
            dim,
        }
    }

    pub fn forward<'t>(&self, params: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        layer_norm(x, params[self.scale], params[self.shift], LAYER_NORM_EPS)
    }
}
