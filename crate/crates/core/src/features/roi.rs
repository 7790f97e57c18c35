use super::ActorBox;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Output grid side of RoIAlign.
pub const ROI_SIZE: usize = 7;

/// Bilinear interpolation of an `[H×W×C]` map at continuous feature
/// coordinates `(y, x)`, clamped to the map border. Writes `C` values.
pub fn bilinear_sample(fmap: &Tensor, y: f64, x: f64, out: &mut [f64]) {
    let (h, w, c) = (fmap.shape()[0], fmap.shape()[1], fmap.shape()[2]);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (ly, lx) = (y - y0 as f64, x - x0 as f64);
    let cell = |yy: usize, xx: usize| &fmap.data()[(yy * w + xx) * c..][..c];
    let corners = [
        (cell(y0, x0), (1.0 - ly) * (1.0 - lx)),
        (cell(y0, x1), (1.0 - ly) * lx),
        (cell(y1, x0), ly * (1.0 - lx)),
        (cell(y1, x1), ly * lx),
    ];
    out.fill(0.0);
    for (values, weight) in corners {
        for (o, v) in out.iter_mut().zip(values) {
            *o += weight * v;
        }
    }
}

/// RoIAlign with one bilinear sample at each bin center.
///
/// Normalized box coordinates are scaled by `(W-1, H-1)` into continuous
/// feature coordinates without rounding.
pub fn roi_align(fmap: &Tensor, bbox: &ActorBox, out_size: usize) -> Result<Tensor> {
    if fmap.rank() != 3 {
        return Err(Error::shape("roi_align", fmap.shape(), &[0, 0, 0]));
    }
    bbox.validate()?;
    let (h, w, c) = (fmap.shape()[0], fmap.shape()[1], fmap.shape()[2]);
    let (sx, sy) = ((w - 1) as f64, (h - 1) as f64);
    let (fx1, fx2) = (bbox.x1 * sx, bbox.x2 * sx);
    let (fy1, fy2) = (bbox.y1 * sy, bbox.y2 * sy);
    if fx2 - fx1 <= 0.0 || fy2 - fy1 <= 0.0 {
        return Err(Error::InvalidBox(format!(
            "box {bbox:?} has zero area on a {h}x{w} feature map"
        )));
    }
    let bin_w = (fx2 - fx1) / out_size as f64;
    let bin_h = (fy2 - fy1) / out_size as f64;
    let mut data = vec![0.0; out_size * out_size * c];
    for i in 0..out_size {
        let y = fy1 + (i as f64 + 0.5) * bin_h;
        for j in 0..out_size {
            let x = fx1 + (j as f64 + 0.5) * bin_w;
            bilinear_sample(fmap, y, x, &mut data[(i * out_size + j) * c..][..c]);
        }
    }
    Tensor::new([out_size, out_size, c], data)
}
