//! From two-pathway backbone maps and actor boxes to attention-ready tokens.

mod boxes;
mod roi;

pub(crate) use boxes::parse_f64 as boxes_parse_f64;
pub use boxes::{filter_proposals, parse_box_list, write_box_list, ActorBox, BoxRecord};
pub use roi::{bilinear_sample, roi_align, ROI_SIZE};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Slow and fast backbone maps, `[T_s×H×W×C_s]` and `[T_f×H×W×C_f]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathwayFeatures {
    slow: Tensor,
    fast: Tensor,
}

impl PathwayFeatures {
    pub fn new(slow: Tensor, fast: Tensor) -> Result<Self> {
        if slow.rank() != 4 || fast.rank() != 4 {
            return Err(Error::shape("pathway_features", slow.shape(), fast.shape()));
        }
        if slow.shape()[1..3] != fast.shape()[1..3] {
            return Err(Error::shape("pathway_features", slow.shape(), fast.shape()));
        }
        if fast.shape()[0] <= slow.shape()[0] {
            return Err(Error::Config(format!(
                "fast pathway needs more frames than slow (T_f={} T_s={})",
                fast.shape()[0],
                slow.shape()[0]
            )));
        }
        Ok(PathwayFeatures { slow, fast })
    }

    pub fn slow(&self) -> &Tensor {
        &self.slow
    }

    pub fn fast(&self) -> &Tensor {
        &self.fast
    }

    pub fn slow_frames(&self) -> usize {
        self.slow.shape()[0]
    }

    pub fn fast_frames(&self) -> usize {
        self.fast.shape()[0]
    }

    /// Spatial extent `(H, W)` shared by both pathways.
    pub fn grid(&self) -> (usize, usize) {
        (self.slow.shape()[1], self.slow.shape()[2])
    }

    pub fn slow_channels(&self) -> usize {
        self.slow.shape()[3]
    }

    pub fn fast_channels(&self) -> usize {
        self.fast.shape()[3]
    }

    pub fn channels(&self) -> usize {
        self.slow_channels() + self.fast_channels()
    }
}

fn expect_rank4(f: &Tensor, op: &'static str) -> Result<()> {
    if f.rank() != 4 {
        return Err(Error::shape(op, f.shape(), &[0, 0, 0, 0]));
    }
    Ok(())
}

/// Mean over time: `[T×H×W×C] → [H×W×C]`.
pub fn temporal_pool(f: &Tensor) -> Result<Tensor> {
    expect_rank4(f, "temporal_pool")?;
    f.mean_axis(0)
}

/// Mean over both spatial axes: `[T×H×W×C] → [T×C]`.
pub fn spatial_pool(f: &Tensor) -> Result<Tensor> {
    expect_rank4(f, "spatial_pool")?;
    let s = f.shape();
    f.reshape([s[0], s[1] * s[2], s[3]])?.mean_axis(1)
}

/// Context inputs derived from one clip's pathway features.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextMaps {
    /// Channel concatenation of both temporally pooled pathways, `[H×W×(C_s+C_f)]`.
    pub pooled_concat: Tensor,
    /// Temporally pooled slow map flattened over space, `[(H·W)×C_s]`.
    pub slow_tokens: Tensor,
    /// Spatially pooled fast map, one token per frame, `[T_f×C_f]`.
    pub fast_tokens: Tensor,
}

impl ContextMaps {
    /// `pooled_concat` flattened over space, `[(H·W)×C]`.
    pub fn concat_tokens(&self) -> Tensor {
        let s = self.pooled_concat.shape();
        self.pooled_concat.reshape([s[0] * s[1], s[2]]).expect("rank-3 map")
    }
}

pub fn build_context_maps(pf: &PathwayFeatures) -> Result<ContextMaps> {
    let slow = temporal_pool(pf.slow())?;
    let fast = temporal_pool(pf.fast())?;
    let pooled_concat = Tensor::concat(&[&slow, &fast], 2)?;
    let (h, w) = pf.grid();
    Ok(ContextMaps {
        slow_tokens: slow.reshape([h * w, pf.slow_channels()])?,
        fast_tokens: spatial_pool(pf.fast())?,
        pooled_concat,
    })
}

/// One actor's RoIAligned grid, kept at full spatial resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorFeature {
    /// `[7×7×C]`
    pub grid: Tensor,
    /// `[49×C]`, the row-major flattening of `grid`.
    pub tokens: Tensor,
}

impl ActorFeature {
    pub fn from_grid(grid: Tensor) -> Result<Self> {
        let s = grid.shape().to_vec();
        if s.len() != 3 {
            return Err(Error::shape("actor_feature", &s, &[ROI_SIZE, ROI_SIZE, 0]));
        }
        let tokens = grid.reshape([s[0] * s[1], s[2]])?;
        Ok(ActorFeature { grid, tokens })
    }
}

/// RoIAligns every box on an already pooled `[H×W×C]` map.
pub fn extract_from_map(pooled_concat: &Tensor, boxes: &[ActorBox]) -> Result<Vec<ActorFeature>> {
    boxes
        .iter()
        .map(|b| ActorFeature::from_grid(roi_align(pooled_concat, b, ROI_SIZE)?))
        .collect()
}

pub fn extract_actor_features(pf: &PathwayFeatures, boxes: &[ActorBox]) -> Result<Vec<ActorFeature>> {
    if boxes.is_empty() {
        return Ok(Vec::new());
    }
    let maps = build_context_maps(pf)?;
    extract_from_map(&maps.pooled_concat, boxes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(shape: [usize; 4]) -> Tensor {
        Tensor::from_fn(shape, |ix| (ix[0] * 1000 + ix[1] * 100 + ix[2] * 10 + ix[3]) as f64).unwrap()
    }

    #[test]
    fn temporal_pool_of_two_slices() {
        let f = Tensor::from_fn([2, 2, 2, 1], |ix| if ix[0] == 0 { 0.0 } else { 2.0 }).unwrap();
        assert_eq!(temporal_pool(&f).unwrap(), Tensor::ones([2, 2, 1]).unwrap());
    }

    #[test]
    fn temporal_pool_of_time_constant() {
        let f = Tensor::from_fn([3, 2, 2, 2], |ix| (ix[1] + 2 * ix[2] + 4 * ix[3]) as f64).unwrap();
        let expected = Tensor::from_fn([2, 2, 2], |ix| (ix[0] + 2 * ix[1] + 4 * ix[2]) as f64).unwrap();
        assert_eq!(temporal_pool(&f).unwrap(), expected);
    }

    #[test]
    fn spatial_pool_cases() {
        let f = Tensor::from_fn([4, 3, 2, 1], |ix| ix[0] as f64 * 1.5).unwrap();
        assert_eq!(spatial_pool(&f).unwrap().data(), &[0.0, 1.5, 3.0, 4.5]);
        let g = ramp([3, 1, 1, 2]);
        assert_eq!(spatial_pool(&g).unwrap().data(), g.data());
    }

    #[test]
    fn pathway_validation() {
        let ok = PathwayFeatures::new(ramp([2, 3, 3, 4]), ramp([8, 3, 3, 1]));
        assert!(ok.is_ok());
        assert!(PathwayFeatures::new(ramp([2, 3, 3, 4]), ramp([2, 3, 3, 1])).is_err());
        assert!(PathwayFeatures::new(ramp([2, 3, 3, 4]), ramp([8, 3, 2, 1])).is_err());
    }

    #[test]
    fn context_map_shapes() {
        let pf = PathwayFeatures::new(ramp([2, 3, 4, 2]), ramp([5, 3, 4, 1])).unwrap();
        let maps = build_context_maps(&pf).unwrap();
        assert_eq!(maps.pooled_concat.shape(), &[3, 4, 3]);
        assert_eq!(maps.slow_tokens.shape(), &[12, 2]);
        assert_eq!(maps.fast_tokens.shape(), &[5, 1]);
        assert_eq!(maps.concat_tokens().shape(), &[12, 3]);

        let degenerate = PathwayFeatures::new(ramp([1, 1, 1, 2]), ramp([2, 1, 1, 1])).unwrap();
        assert_eq!(build_context_maps(&degenerate).unwrap().slow_tokens.shape(), &[1, 2]);
    }

    #[test]
    fn actor_features_shapes_and_purity() {
        let pf = PathwayFeatures::new(ramp([2, 5, 6, 3]), ramp([4, 5, 6, 2])).unwrap();
        assert!(extract_actor_features(&pf, &[]).unwrap().is_empty());
        let b = ActorBox::new(0.1, 0.2, 0.6, 0.9, 0.95).unwrap();
        let boxes = [b, ActorBox::new(0.0, 0.0, 1.0, 1.0, 0.9).unwrap(), b];
        let feats = extract_actor_features(&pf, &boxes).unwrap();
        assert_eq!(feats.len(), 3);
        for f in &feats {
            assert_eq!(f.grid.shape(), &[7, 7, 5]);
            assert_eq!(f.tokens.shape(), &[49, 5]);
            assert_eq!(f.tokens.data(), f.grid.data());
        }
        assert_eq!(feats[0], feats[2]);
    }
}
