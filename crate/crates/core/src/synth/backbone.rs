use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::WorldConfig;
use crate::error::{Error, Result};
use crate::features::PathwayFeatures;
use crate::tensor::Tensor;

/// Frozen per-pathway projection: `F[i,j,c] = gain[i,j,c] · Σ_p weight[c,p] · patch_ij[p]`.
#[derive(Clone, Debug, PartialEq)]
struct PathwayProjection {
    stride: usize,
    /// `[C × P]`
    weights: Tensor,
    /// `[H × W × C]`
    gains: Tensor,
}

#[derive(Clone, Copy)]
struct Tuning {
    /// Upper end of the uniform patch weights.
    scale: f64,
    offset: f64,
    /// Steepness of each channel's gain plane.
    slope: f64,
}

/// Slow gains stay positive. Fast gains are zero-mean planes, so the pooled
/// fast response tracks where intensity moves rather than how much of it
/// there is; its larger scale keeps that motion signal at unit order.
const SLOW: Tuning = Tuning {
    scale: 0.25,
    offset: 1.0,
    slope: 0.5,
};
const FAST: Tuning = Tuning {
    scale: 4.0,
    offset: 0.0,
    slope: 1.0,
};

impl PathwayProjection {
    fn new(rng: &mut ChaCha8Rng, stride: usize, channels: usize, grid: usize, patch_len: usize, tuning: Tuning) -> Self {
        let weights = (0..channels * patch_len).map(|_| tuning.scale * rng.gen_range(0.0..1.0)).collect();
        // Channel c's gain is offset + slope·(cos θ_c·x + sin θ_c·y) with the
        // plane directions θ_c spread evenly from a random phase, so every
        // stub is equally sensitive to horizontal and vertical placement.
        let phase = rng.gen_range(0.0..std::f64::consts::PI);
        let normals: Vec<(f64, f64)> = (0..channels)
            .map(|c| {
                let theta = phase + std::f64::consts::PI * c as f64 / channels as f64;
                (tuning.slope * theta.cos(), tuning.slope * theta.sin())
            })
            .collect();
        let coord = |k: usize| (2 * k + 1) as f64 / grid as f64 - 1.0;
        let mut gains = Vec::with_capacity(grid * grid * channels);
        for i in 0..grid {
            for j in 0..grid {
                gains.extend(normals.iter().map(|(nx, ny)| tuning.offset + nx * coord(j) + ny * coord(i)));
            }
        }
        PathwayProjection {
            stride,
            weights: Tensor::new([channels, patch_len], weights).expect("projection shape"),
            gains: Tensor::new([grid, grid, channels], gains).expect("gain shape"),
        }
    }

    fn channels(&self) -> usize {
        self.weights.shape()[0]
    }
}

/// Stand-in for a two-pathway video backbone: a fixed random linear map from
/// non-overlapping frame patches to channels, applied independently per
/// sampled frame. Never trained.
#[derive(Clone, Debug, PartialEq)]
pub struct BackboneStub {
    grid: usize,
    patch: usize,
    slow: PathwayProjection,
    fast: PathwayProjection,
}

impl BackboneStub {
    pub fn new(config: &WorldConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let patch = config.image_size / config.grid_size;
        let patch_len = patch * patch;
        let slow = PathwayProjection::new(&mut rng, config.slow_stride, config.slow_channels, config.grid_size, patch_len, SLOW);
        let fast = PathwayProjection::new(&mut rng, config.fast_stride, config.fast_channels, config.grid_size, patch_len, FAST);
        Ok(BackboneStub {
            grid: config.grid_size,
            patch,
            slow,
            fast,
        })
    }

    /// Frames read by a pathway with `stride`: the middle frame of each
    /// stride-long window, `stride/2 + k·stride`.
    pub fn sampled_frames(stride: usize, frames: usize) -> Vec<usize> {
        (0..frames / stride).map(|k| stride / 2 + k * stride).collect()
    }

    /// Maps `[T × S × S × 1]` frames to `(F_s, F_f)`.
    pub fn extract(&self, frames: &Tensor) -> Result<PathwayFeatures> {
        let s = frames.shape();
        let size = self.grid * self.patch;
        if s.len() != 4 || s[1] != size || s[2] != size || s[3] != 1 {
            return Err(Error::Config(format!(
                "backbone expects [T x {size} x {size} x 1] frames, got {s:?}"
            )));
        }
        let t = s[0];
        for stride in [self.slow.stride, self.fast.stride] {
            if t % stride != 0 {
                return Err(Error::Config(format!("{t} frames not divisible by stride {stride}")));
            }
        }
        let slow = self.project(frames, &self.slow)?;
        let fast = self.project(frames, &self.fast)?;
        PathwayFeatures::new(slow, fast)
    }

    fn project(&self, frames: &Tensor, pathway: &PathwayProjection) -> Result<Tensor> {
        let t = frames.shape()[0];
        let size = self.grid * self.patch;
        let channels = pathway.channels();
        let patch_len = self.patch * self.patch;
        let sampled = Self::sampled_frames(pathway.stride, t);
        let mut out = Vec::with_capacity(sampled.len() * self.grid * self.grid * channels);
        let mut patch = vec![0.0; patch_len];
        for &frame in &sampled {
            let pixels = &frames.data()[frame * size * size..][..size * size];
            for i in 0..self.grid {
                for j in 0..self.grid {
                    for dy in 0..self.patch {
                        let row = (i * self.patch + dy) * size + j * self.patch;
                        patch[dy * self.patch..][..self.patch].copy_from_slice(&pixels[row..][..self.patch]);
                    }
                    let gains = &pathway.gains.data()[(i * self.grid + j) * channels..][..channels];
                    for (c, gain) in gains.iter().enumerate() {
                        let w = &pathway.weights.data()[c * patch_len..][..patch_len];
                        let dot: f64 = w.iter().zip(&patch).map(|(a, b)| a * b).sum();
                        out.push(gain * dot);
                    }
                }
            }
        }
        Tensor::new([sampled.len(), self.grid, self.grid, channels], out)
    }
}
