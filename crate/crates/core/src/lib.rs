//! Repair of topological disconnections in binary tubular trees.
//!
//! The pipeline: build intact trees ([`synth::generate_phantom_tree`] or any
//! user volume), extract centerline graphs ([`skeleton`]), synthesize breaks
//! ([`synth`]), train a heatmap keypoint detector ([`detector`]), run whole
//! volume detection ([`inference`]), score it ([`metrics`]) and bridge the
//! gap ([`repair`]).

pub mod error;
pub mod fsutil;
pub mod geometry;
pub mod detector;
pub mod heatmap;
pub mod inference;
pub mod metrics;
pub mod repair;
pub mod skeleton;
pub mod spatial;
pub mod synth;
pub mod volume;

pub use error::{Error, ErrorClass, Result};
