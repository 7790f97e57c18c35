//! Spatio-temporal context head for video action detection.
//!
//! Actor features are RoIAligned from temporally pooled two-pathway backbone
//! maps, kept at full 7×7 spatial resolution, and enriched by two cross
//! attention blocks: one over temporally pooled slow-pathway tokens (space),
//! one over spatially pooled fast-pathway tokens (time).

pub mod error;
pub mod eval;
pub mod features;
pub mod head;
pub mod nn;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
