use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major array of `f64` values.
///
/// A `Tensor` is a plain value: gradients are tracked by recording it on a
/// [`Tape`](super::Tape), never on the tensor itself.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const PREVIEW: usize = 8;
        write!(f, "Tensor{:?} ", self.shape)?;
        if self.data.len() <= PREVIEW {
            write!(f, "{:?}", self.data)
        } else {
            write!(f, "{:?}..", &self.data[..PREVIEW])
        }
    }
}

/// Splits `shape` around `axis` into (outer, extent, inner) element counts.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        if shape.contains(&0) {
            return Err(Error::InvalidShape {
                shape,
                reason: "extents must be positive".into(),
            });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidShape {
                shape,
                reason: format!("expected {expected} elements, got {}", data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    /// Internal constructor for shapes already known to be consistent.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::from_parts(Vec::new(), vec![value])
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f64) -> Result<Self> {
        let shape = shape.into();
        let n = shape.iter().product();
        Tensor::new(shape, vec![value; n])
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Result<Self> {
        Tensor::full(shape, 0.0)
    }

    pub fn ones(shape: impl Into<Vec<usize>>) -> Result<Self> {
        Tensor::full(shape, 1.0)
    }

    /// Builds a tensor by evaluating `f` at every multi-index in row-major order.
    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        let mut index = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f(&index));
            for axis in (0..shape.len()).rev() {
                index[axis] += 1;
                if index[axis] < shape[axis] {
                    break;
                }
                index[axis] = 0;
            }
        }
        Tensor::new(shape, data)
    }

    /// Identity matrix of size `n`.
    pub fn eye(n: usize) -> Result<Self> {
        Tensor::from_fn([n, n], |ix| if ix[0] == ix[1] { 1.0 } else { 0.0 })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.shape.len()];
        for axis in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * self.shape[axis + 1];
        }
        strides
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.rank(), "index rank mismatch");
        let offset: usize = index
            .iter()
            .zip(self.strides())
            .map(|(i, s)| i * s)
            .sum();
        self.data[offset]
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn check_axis(&self, axis: usize) -> Result<()> {
        if axis >= self.rank() {
            return Err(Error::AxisOutOfRange {
                axis,
                rank: self.rank(),
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(op, &self.shape, &other.shape));
        }
        Ok(Tensor::from_parts(
            self.shape.clone(),
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Tensor> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != self.len() || shape.contains(&0) {
            return Err(Error::shape("reshape", &self.shape, &shape));
        }
        Ok(Tensor::from_parts(shape, self.data.clone()))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if axes.len() != rank {
            return Err(Error::shape("permute", &self.shape, axes));
        }
        for &a in axes {
            if a >= rank || seen[a] {
                return Err(Error::shape("permute", &self.shape, axes));
            }
            seen[a] = true;
        }
        let in_strides = self.strides();
        let out_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let gather_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
        let mut data = Vec::with_capacity(self.len());
        let mut index = vec![0usize; rank];
        let mut offset = 0usize;
        for _ in 0..self.len() {
            data.push(self.data[offset]);
            for axis in (0..rank).rev() {
                index[axis] += 1;
                offset += gather_strides[axis];
                if index[axis] < out_shape[axis] {
                    break;
                }
                offset -= gather_strides[axis] * out_shape[axis];
                index[axis] = 0;
            }
        }
        Ok(Tensor::from_parts(out_shape, data))
    }

    /// Swaps the two axes of a matrix.
    pub fn transpose(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::InvalidShape {
                shape: self.shape.clone(),
                reason: "transpose expects a matrix".into(),
            });
        }
        self.permute(&[1, 0])
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || other.rank() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::shape("matmul", &self.shape, &other.shape));
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![0.0; m * n];
        matmul_into(&self.data, &other.data, &mut out, m, k, n);
        Ok(Tensor::from_parts(vec![m, n], out))
    }

    /// Arithmetic mean along `axis`; the axis is removed.
    pub fn mean_axis(&self, axis: usize) -> Result<Tensor> {
        self.check_axis(axis)?;
        let (outer, extent, inner) = split_axis(&self.shape, axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..extent {
                let src = &self.data[(o * extent + k) * inner..][..inner];
                for (dst, &v) in out[o * inner..][..inner].iter_mut().zip(src) {
                    *dst += v;
                }
            }
        }
        let scale = 1.0 / extent as f64;
        out.iter_mut().for_each(|v| *v *= scale);
        let mut shape = self.shape.clone();
        shape.remove(axis);
        Ok(Tensor::from_parts(shape, out))
    }

    /// Maximum along `axis` together with the position of the first maximum
    /// in scan order for every output element.
    pub fn max_axis_with_argmax(&self, axis: usize) -> Result<(Tensor, Vec<usize>)> {
        self.check_axis(axis)?;
        let (outer, extent, inner) = split_axis(&self.shape, axis);
        let mut out = vec![f64::NEG_INFINITY; outer * inner];
        let mut arg = vec![0usize; outer * inner];
        for o in 0..outer {
            for k in 0..extent {
                let src = &self.data[(o * extent + k) * inner..][..inner];
                for (j, &v) in src.iter().enumerate() {
                    let slot = o * inner + j;
                    if v > out[slot] || k == 0 {
                        out[slot] = v;
                        arg[slot] = k;
                    }
                }
            }
        }
        let mut shape = self.shape.clone();
        shape.remove(axis);
        Ok((Tensor::from_parts(shape, out), arg))
    }

    pub fn max_axis(&self, axis: usize) -> Result<Tensor> {
        self.max_axis_with_argmax(axis).map(|(t, _)| t)
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        self.check_axis(axis)?;
        let (outer, extent, inner) = split_axis(&self.shape, axis);
        let mut out = self.data.clone();
        for o in 0..outer {
            for j in 0..inner {
                let at = |k: usize| (o * extent + k) * inner + j;
                let max = (0..extent).map(|k| out[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for k in 0..extent {
                    let e = (out[at(k)] - max).exp();
                    out[at(k)] = e;
                    sum += e;
                }
                for k in 0..extent {
                    out[at(k)] /= sum;
                }
            }
        }
        Ok(Tensor::from_parts(self.shape.clone(), out))
    }

    /// Concatenates tensors along `axis`; all other extents must agree.
    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| Error::InvalidShape {
            shape: vec![],
            reason: "concat of zero tensors".into(),
        })?;
        first.check_axis(axis)?;
        let mut shape = first.shape.clone();
        shape[axis] = 0;
        for p in parts {
            let compatible = p.rank() == first.rank()
                && p.shape.iter().enumerate().all(|(a, &e)| a == axis || e == first.shape[a]);
            if !compatible {
                return Err(Error::shape("concat", &first.shape, &p.shape));
            }
            shape[axis] += p.shape[axis];
        }
        let (outer, _, inner) = split_axis(&first.shape, axis);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for p in parts {
                let block = p.shape[axis] * inner;
                data.extend_from_slice(&p.data[o * block..][..block]);
            }
        }
        Ok(Tensor::from_parts(shape, data))
    }

    /// Contiguous range `[start, start + len)` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        self.check_axis(axis)?;
        if len == 0 || start + len > self.shape[axis] {
            return Err(Error::InvalidShape {
                shape: self.shape.clone(),
                reason: format!("slice [{start}, {}) out of range on axis {axis}", start + len),
            });
        }
        let (outer, extent, inner) = split_axis(&self.shape, axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            data.extend_from_slice(&self.data[(o * extent + start) * inner..][..len * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = len;
        Ok(Tensor::from_parts(shape, data))
    }

    /// Selects entries along `axis` by index, in the given order.
    pub fn gather(&self, axis: usize, indices: &[usize]) -> Result<Tensor> {
        self.check_axis(axis)?;
        let (outer, extent, inner) = split_axis(&self.shape, axis);
        if indices.is_empty() || indices.iter().any(|&i| i >= extent) {
            return Err(Error::InvalidShape {
                shape: self.shape.clone(),
                reason: format!("gather indices {indices:?} invalid for axis {axis}"),
            });
        }
        let mut data = Vec::with_capacity(outer * indices.len() * inner);
        for o in 0..outer {
            for &i in indices {
                data.extend_from_slice(&self.data[(o * extent + i) * inner..][..inner]);
            }
        }
        let mut shape = self.shape.clone();
        shape[axis] = indices.len();
        Ok(Tensor::from_parts(shape, data))
    }
}

/// `out += a[m×k] · b[k×n]`, loop order i-k-j.
pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}
