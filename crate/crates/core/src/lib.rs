//! Lateral motion prediction for highway traffic.
//!
//! A neural gate classifies the upcoming maneuver (lane change left, follow
//! lane, lane change right); per-maneuver Gaussian mixtures over lateral
//! state and future offset are combined under the gate into a predictive
//! distribution of the lateral position.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod artifact;
pub mod data_model;
pub mod error;
pub mod evaluation;
pub mod experts;
pub mod features;
pub mod gmm;
pub mod ingest;
pub mod labeling;
pub mod mlp;
pub mod moe;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
