//! Violation-of-expectation benchmark toolkit.
//!
//! A planar rigid-body simulator and flat-shaded RGBD rasterizer feed a
//! procedural generator of paired plausible/implausible videos. An
//! explanation-based reasoner scores surprise by searching over latent
//! explanations of what the occluder hides, and the metrics module turns
//! per-video scores into paired, pooled and comparative accuracies.

pub mod dynamics;
pub mod error;
pub mod generator;
pub mod metrics;
pub mod reasoner;
pub mod render;
pub mod storage;
pub mod world;

pub use error::{Error, Result};
