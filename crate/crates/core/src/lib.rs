//! Bayesian Teaching for explainable image classification.
//!
//! The crate covers the whole offline pipeline:
//!
//! - [`featstore`]: labeled feature vectors on disk (JSON index + raw f32 payload).
//! - [`plda`]: the PLDA explainee model and its pair-conditional predictive density.
//! - [`teach`]: candidate example sets, simulated explainee fidelity and selection policies.
//! - [`saliency`]: GP mask priors, Monte-Carlo expected saliency maps, blur/jet rendering.
//! - [`trialgen`]: confusion-matrix driven 2AFC trial set assembly.
//! - [`metrics`]: fidelity, sensitivity, specificity and bootstrap intervals.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod featstore;
pub mod metrics;
pub mod plda;
pub mod saliency;
pub mod seed;
pub mod teach;
pub mod trialgen;

pub use error::{Error, Result};
