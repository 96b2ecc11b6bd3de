//! Saliency maps from a sigmoid-squashed Gaussian-process mask prior.
//!
//! Masks `m_i = σ(g_i)` are drawn from a GP on the pixel grid
//! ([`gp`]); the expected map weights each mask by the classifier's
//! probability for the label on the masked image ([`expect`]):
//!
//! ```text
//! E[M | y, d] ≈ Σ m_i g(y | d ⊙ m_i) / Σ g(y | d ⊙ m_i)
//! ```
//!
//! Maps are rendered as a selective blur or a jet overlay ([`render`]).

pub mod classifier;
pub mod expect;
pub mod gp;
pub mod image;
pub mod protocol;
pub mod render;

pub use self::classifier::{ConstantClassifier, LinearToyClassifier, MaskedClassifier};
pub use self::expect::{expected_saliency, expected_saliency_streaming, SaliencyMap};
pub use self::gp::{sample_masks, GpMaskConfig, GridGpSampler, MaskBatch};
pub use self::image::Image;
pub use self::render::{blur_window_width, jet, render_blur, render_jet};
