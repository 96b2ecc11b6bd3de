//! Classifiers queried on masked images.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::image::Image;
use crate::{seed, Error, Result};

/// Probability of each requested label for an image.
///
/// Implementations must be deterministic per input and return one finite
/// probability in [0, 1] per label.
pub trait MaskedClassifier: Send + Sync {
    fn classify(&self, image: &Image, labels: &[String]) -> Result<Vec<f64>>;
}

impl<T: MaskedClassifier + ?Sized> MaskedClassifier for &T {
    fn classify(&self, image: &Image, labels: &[String]) -> Result<Vec<f64>> {
        (**self).classify(image, labels)
    }
}

impl<T: MaskedClassifier + ?Sized> MaskedClassifier for Box<T> {
    fn classify(&self, image: &Image, labels: &[String]) -> Result<Vec<f64>> {
        (**self).classify(image, labels)
    }
}

/// Returns the same probability for every input.
#[derive(Debug, Clone, Copy)]
pub struct ConstantClassifier(pub f64);

impl MaskedClassifier for ConstantClassifier {
    fn classify(&self, _image: &Image, labels: &[String]) -> Result<Vec<f64>> {
        Ok(vec![self.0; labels.len()])
    }
}

/// Softmax over linear scores `⟨w_k, image⟩ + b_k`.
///
/// Stands in for a real network in tests and offline runs.
#[derive(Debug, Clone)]
pub struct LinearToyClassifier {
    width: usize,
    height: usize,
    labels: Vec<String>,
    positions: HashMap<String, usize>,
    weights: Vec<Vec<f32>>,
    bias: Vec<f64>,
}

impl LinearToyClassifier {
    pub fn new(
        width: usize,
        height: usize,
        labels: Vec<String>,
        weights: Vec<Vec<f32>>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        let n = width * height * 3;
        if weights.len() != labels.len() || bias.len() != labels.len() {
            return Err(Error::InvalidConfig(
                "one weight vector and bias per label required".into(),
            ));
        }
        if let Some(w) = weights.iter().find(|w| w.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: w.len(),
            });
        }
        let positions = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        Ok(Self {
            width,
            height,
            labels,
            positions,
            weights,
            bias,
        })
    }

    /// Each label responds to a Gaussian blob of a random color at a random spot.
    pub fn seeded(width: usize, height: usize, labels: Vec<String>, seed: u64) -> Self {
        let mut rng = seed::rng(seed::derive(seed, "toy-classifier", 0));
        let radius = (width.min(height) as f64 / 6.0).max(1.0);
        let mut weights = Vec::with_capacity(labels.len());
        let mut bias = Vec::with_capacity(labels.len());
        for _ in &labels {
            let cx = rng.random_range(0.0..width as f64);
            let cy = rng.random_range(0.0..height as f64);
            let color: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            let gain = 8.0 / (radius * radius);
            let mut w = Vec::with_capacity(width * height * 3);
            for y in 0..height {
                for x in 0..width {
                    let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    let bump = gain * (-0.5 * d2 / (radius * radius)).exp();
                    w.extend(color.iter().map(|c| (c * bump) as f32));
                }
            }
            weights.push(w);
            bias.push(0.0);
        }
        Self::new(width, height, labels, weights, bias).expect("shapes are consistent")
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    fn logits(&self, image: &Image) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| {
                w.iter()
                    .zip(&image.data)
                    .map(|(&a, &x)| f64::from(a) * f64::from(x))
                    .sum::<f64>()
                    + b
            })
            .collect()
    }
}

impl MaskedClassifier for LinearToyClassifier {
    fn classify(&self, image: &Image, labels: &[String]) -> Result<Vec<f64>> {
        if image.width != self.width || image.height != self.height {
            return Err(Error::DimensionMismatch {
                expected: self.width * self.height,
                got: image.n_pixels(),
            });
        }
        let logits = self.logits(image);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let norm: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        labels
            .iter()
            .map(|l| {
                let k = *self
                    .positions
                    .get(l)
                    .ok_or_else(|| Error::UnknownCategory(l.clone()))?;
                Ok((logits[k] - max).exp() / norm)
            })
            .collect()
    }
}
