//! Deterministic desk-scale video world: two blob actors hand a small object
//! from one to the other.
//!
//! A `give` clip and a `receive` clip generated from the same seed are time
//! reflections of each other about the center frame, which they share
//! exactly. Any model that only sees temporally pooled features cannot tell
//! them apart; the direction is only recoverable from frame order.

mod backbone;
mod dump;

pub use backbone::BackboneStub;
pub use dump::{decode_clip, encode_clip, ClipDump, CLIP_MAGIC, CLIP_VERSION};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::ActorBox;
use crate::tensor::Tensor;

/// Class vocabulary of the synthetic world, in class-id order.
pub const CLASS_NAMES: [&str; 6] = ["give", "receive", "striped", "banded", "bright", "tall"];

/// Class ids that depend on temporal order.
pub const DIRECTION_CLASSES: [usize; 2] = [0, 1];

#[derive(Clone, Debug, PartialEq)]
pub struct WorldConfig {
    pub image_size: usize,
    /// Feature-map side `H = W`; `image_size` must be a multiple.
    pub grid_size: usize,
    pub frames: usize,
    pub slow_stride: usize,
    pub fast_stride: usize,
    pub slow_channels: usize,
    pub fast_channels: usize,
    pub num_classes: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            image_size: 32,
            grid_size: 8,
            frames: 16,
            slow_stride: 8,
            fast_stride: 2,
            slow_channels: 16,
            fast_channels: 4,
            num_classes: 6,
        }
    }
}

impl WorldConfig {
    pub fn slow_frames(&self) -> usize {
        self.frames / self.slow_stride
    }

    pub fn fast_frames(&self) -> usize {
        self.frames / self.fast_stride
    }

    pub fn validate(&self) -> Result<()> {
        let c = self;
        if [c.image_size, c.grid_size, c.frames, c.slow_stride, c.fast_stride, c.slow_channels, c.fast_channels]
            .contains(&0)
        {
            return Err(Error::Config("world dimensions must be positive".into()));
        }
        if c.image_size % c.grid_size != 0 {
            return Err(Error::Config(format!(
                "image_size {} is not a multiple of grid_size {}",
                c.image_size, c.grid_size
            )));
        }
        if c.frames % c.slow_stride != 0 || c.frames % c.fast_stride != 0 {
            return Err(Error::Config(format!(
                "frame count {} must be divisible by both strides ({}, {})",
                c.frames, c.slow_stride, c.fast_stride
            )));
        }
        if c.fast_frames() <= c.slow_frames() {
            return Err(Error::Config("fast pathway must sample more frames than slow".into()));
        }
        if !(2..=CLASS_NAMES.len()).contains(&c.num_classes) {
            return Err(Error::Config(format!(
                "synthetic world supports 2..={} classes, got {}",
                CLASS_NAMES.len(),
                c.num_classes
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Object travels from actor A to actor B.
    Give,
    /// Object travels from actor B to actor A.
    Receive,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Give => "give",
            Direction::Receive => "receive",
        }
    }
}

/// Image half in which actor A stands; actor B takes the other.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

/// What a clip depicts: the transfer direction and the actors' layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Scenario {
    pub direction: Direction,
    pub actor_a_side: Side,
}

impl Scenario {
    pub fn new(direction: Direction, actor_a_side: Side) -> Self {
        Scenario {
            direction,
            actor_a_side,
        }
    }
}

/// Texture attributes of one actor; attribute `k` is class `2 + k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Texture {
    pub striped: bool,
    pub banded: bool,
    pub bright: bool,
    pub tall: bool,
}

impl Texture {
    fn flags(self) -> [bool; 4] {
        [self.striped, self.banded, self.bright, self.tall]
    }
}

/// Layout and motion of a clip, fully determined by its seed and [`Scenario`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioDescriptor {
    pub seed: u64,
    pub direction: Direction,
    /// Actor centers in pixels, `(x, y)`.
    pub actor_a: (f64, f64),
    pub actor_b: (f64, f64),
    pub textures: [Texture; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedActor {
    pub bbox: ActorBox,
    /// 0/1 per class.
    pub labels: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticClip {
    pub id: String,
    /// `[T × H_img × W_img × 1]`, values representable as `f32`.
    pub frames: Tensor,
    pub actors: Vec<AnnotatedActor>,
    /// Detector-style proposals; confidences above 0.8 for jittered actor
    /// boxes, below 0.8 for distractors.
    pub proposals: Vec<ActorBox>,
    pub scenario: ScenarioDescriptor,
}

impl SyntheticClip {
    /// Annotated boxes followed by proposals.
    pub fn all_boxes(&self) -> Vec<ActorBox> {
        self.actors.iter().map(|a| a.bbox).chain(self.proposals.iter().copied()).collect()
    }

    pub fn center_frame(&self) -> Tensor {
        let t = self.frames.shape()[0];
        self.frames.slice(0, t / 2, 1).expect("center frame in range")
    }
}

const ACTOR_SIGMA_X: f64 = 2.2;
const ACTOR_SIGMA_Y: f64 = 3.4;
const TALL_SIGMA_Y: f64 = 4.6;
const OBJECT_SIGMA: f64 = 1.5;
const OBJECT_INTENSITY: f64 = 8.0;

fn actor_sigma_y(t: Texture) -> f64 {
    if t.tall {
        TALL_SIGMA_Y
    } else {
        ACTOR_SIGMA_Y
    }
}

/// Scene layout in pixels for a square image of side `size`.
fn sample_scenario(seed: u64, scenario: Scenario, size: f64) -> ScenarioDescriptor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = size / 32.0;
    let left = (rng.gen_range(7.0..10.0) * u, rng.gen_range(13.0..19.0) * u);
    let right = (rng.gen_range(22.0..25.0) * u, rng.gen_range(13.0..19.0) * u);
    let (actor_a, actor_b) = match scenario.actor_a_side {
        Side::Left => (left, right),
        Side::Right => (right, left),
    };
    let mut texture = || Texture {
        striped: rng.gen_bool(0.5),
        banded: rng.gen_bool(0.5),
        bright: rng.gen_bool(0.5),
        tall: rng.gen_bool(0.5),
    };
    let textures = [texture(), texture()];
    ScenarioDescriptor {
        seed,
        direction: scenario.direction,
        actor_a,
        actor_b,
        textures,
    }
}

impl ScenarioDescriptor {
    /// Object center at frame `t` of `frames`.
    ///
    /// The path parameter is `t/T` for give and `(T-t)/T` for receive, so
    /// frame `t` of one equals frame `T-t` of the other and both pass the
    /// midpoint at `t = T/2`.
    pub fn object_position(&self, t: usize, frames: usize) -> (f64, f64) {
        let s = match self.direction {
            Direction::Give => t as f64 / frames as f64,
            Direction::Receive => (frames - t) as f64 / frames as f64,
        };
        let (a, b) = (self.actor_a, self.actor_b);
        (a.0 * (1.0 - s) + b.0 * s, a.1 * (1.0 - s) + b.1 * s)
    }
}

fn gaussian(dx: f64, dy: f64, sx: f64, sy: f64) -> f64 {
    (-0.5 * (dx * dx / (sx * sx) + dy * dy / (sy * sy))).exp()
}

fn actor_intensity(px: f64, py: f64, center: (f64, f64), texture: Texture) -> f64 {
    let (dx, dy) = (px - center.0, py - center.1);
    let mut amp = if texture.bright { 1.6 } else { 1.0 };
    if texture.striped && (py.floor() as i64).rem_euclid(2) == 0 {
        amp *= 0.4;
    }
    if texture.banded && (px.floor() as i64).rem_euclid(2) == 0 {
        amp *= 0.4;
    }
    amp * gaussian(dx, dy, ACTOR_SIGMA_X, actor_sigma_y(texture))
}

fn actor_box(center: (f64, f64), texture: Texture, size: f64) -> ActorBox {
    let half_w = 2.5 * ACTOR_SIGMA_X;
    let half_h = 2.2 * actor_sigma_y(texture);
    let norm = |v: f64| (v / size).clamp(0.0, 1.0);
    ActorBox::annotated(
        norm(center.0 - half_w),
        norm(center.1 - half_h),
        norm(center.0 + half_w),
        norm(center.1 + half_h),
    )
    .expect("actor box inside image")
}

fn jitter(b: &ActorBox, rng: &mut ChaCha8Rng, amount: f64, confidence: f64) -> ActorBox {
    let (w, h) = (b.width(), b.height());
    let mut j = |v: f64, extent: f64| (v + rng.gen_range(-amount..amount) * extent).clamp(0.0, 1.0);
    let x1 = j(b.x1, w);
    let y1 = j(b.y1, h);
    let x2 = j(b.x2, w).max(x1 + 1e-3).min(1.0);
    let y2 = j(b.y2, h).max(y1 + 1e-3).min(1.0);
    ActorBox {
        x1: x1.min(x2 - 1e-3),
        y1: y1.min(y2 - 1e-3),
        x2,
        y2,
        confidence,
        ground_truth: false,
    }
}

/// Renders one clip. Same `(seed, direction)` gives a bit-identical clip.
pub fn generate_clip(id: &str, seed: u64, scenario: Scenario, config: &WorldConfig) -> Result<SyntheticClip> {
    config.validate()?;
    let size = config.image_size;
    let sizef = size as f64;
    let direction = scenario.direction;
    let scenario = sample_scenario(seed, scenario, sizef);
    let centers = [scenario.actor_a, scenario.actor_b];

    // Static layer: faint background noise plus both actors.
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_b0c5);
    let mut background = vec![0.0; size * size];
    for (i, v) in background.iter_mut().enumerate() {
        let (px, py) = ((i % size) as f64 + 0.5, (i / size) as f64 + 0.5);
        let actors: f64 = centers
            .iter()
            .zip(scenario.textures)
            .map(|(&c, t)| actor_intensity(px, py, c, t))
            .sum();
        *v = noise_rng.gen_range(0.0..0.05) + actors;
    }

    let object_sigma = OBJECT_SIGMA * sizef / 32.0;
    let mut frames = Vec::with_capacity(config.frames * size * size);
    for t in 0..config.frames {
        let (ox, oy) = scenario.object_position(t, config.frames);
        for (i, &bg) in background.iter().enumerate() {
            let (px, py) = ((i % size) as f64 + 0.5, (i / size) as f64 + 0.5);
            let v = bg + OBJECT_INTENSITY * gaussian(px - ox, py - oy, object_sigma, object_sigma);
            frames.push(v as f32 as f64);
        }
    }
    let frames = Tensor::new([config.frames, size, size, 1], frames)?;

    let num_attributes = config.num_classes - 2;
    let actors: Vec<AnnotatedActor> = centers
        .iter()
        .zip(scenario.textures)
        .enumerate()
        .map(|(k, (&c, texture))| {
            let gives = (k == 0) == (direction == Direction::Give);
            let mut labels = vec![0.0; config.num_classes];
            labels[if gives { 0 } else { 1 }] = 1.0;
            for (a, flag) in texture.flags().into_iter().take(num_attributes).enumerate() {
                labels[2 + a] = f64::from(u8::from(flag));
            }
            AnnotatedActor {
                bbox: actor_box(c, texture, sizef),
                labels,
            }
        })
        .collect();

    // Proposal confidences never depend on direction.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0b0c_5eed);
    let mut proposals: Vec<ActorBox> = actors
        .iter()
        .map(|a| {
            let conf = rng.gen_range(0.81..0.99);
            jitter(&a.bbox, &mut rng, 0.05, conf)
        })
        .collect();
    let x1 = rng.gen_range(0.0..0.6);
    let y1 = rng.gen_range(0.0..0.6);
    proposals.push(ActorBox::new(
        x1,
        y1,
        x1 + rng.gen_range(0.15..0.35),
        y1 + rng.gen_range(0.2..0.4),
        rng.gen_range(0.3..0.79),
    )?);

    Ok(SyntheticClip {
        id: id.to_string(),
        frames,
        actors,
        proposals,
        scenario,
    })
}

/// Seed of clip `index` in a dataset built from `seed`; distinct per index.
pub fn clip_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(index as u64)
}

pub fn clip_id(index: usize) -> String {
    format!("clip_{index:05}")
}

/// Splits `num_clips` clips into train/val.
///
/// Within each split consecutive clips form twin pairs: a give clip and a
/// receive clip rendered from the same seed and layout, identical up to time
/// reversal. Layouts alternate between pairs (actor A left, then right), so
/// both direction and the giver's side are balanced to within one clip. An
/// odd split ends with an unpaired give clip.
pub fn make_dataset(
    num_clips: usize,
    seed: u64,
    train_ratio: f64,
    val_ratio: f64,
    config: &WorldConfig,
) -> Result<(Vec<SyntheticClip>, Vec<SyntheticClip>)> {
    if train_ratio < 0.0 || val_ratio < 0.0 || (train_ratio + val_ratio - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios {train_ratio} + {val_ratio} must sum to 1"
        )));
    }
    let num_train = ((num_clips as f64) * train_ratio).round() as usize;
    let mut train = Vec::with_capacity(num_train);
    let mut val = Vec::with_capacity(num_clips - num_train);
    for index in 0..num_clips {
        let (split, start) = if index < num_train { (&mut train, 0) } else { (&mut val, num_train) };
        let position = index - start;
        let pair = position / 2;
        let direction = if position % 2 == 0 { Direction::Give } else { Direction::Receive };
        let side = if pair % 2 == 0 { Side::Left } else { Side::Right };
        let pair_seed = clip_seed(seed, start + 2 * pair);
        split.push(generate_clip(&clip_id(index), pair_seed, Scenario::new(direction, side), config)?);
    }
    Ok((train, val))
}
