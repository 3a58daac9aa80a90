//! Tactile force estimation pipeline.
//!
//! - [`sensor`]: tactile sample schema, sensor surface geometry, electrode layout, contact detection
//! - [`mechanics`]: planar pushing friction model and least-squares contact-force inference
//! - [`voxel`]: two-channel voxel encoding of electrode values and contact point
//! - [`nn`]: from-scratch convolutional regression network, losses and training loop
//! - [`baselines`]: linear electrode-normal model and an MLP baseline
//! - [`metrics`]: direction / magnitude error metrics and box-plot summaries
//! - [`synth`]: synthetic pushing episodes, sensor responses and trial-level dataset splits
//! - [`eval`]: model evaluation and the ablation harness
//! - [`cli`]: the `tactile-force` command-line tool

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod mechanics;
pub mod metrics;
pub mod nn;
pub mod sensor;
pub mod synth;
pub mod voxel;

pub use error::{Error, Result};
