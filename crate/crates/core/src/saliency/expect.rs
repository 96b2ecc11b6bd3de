//! Monte-Carlo expected saliency map.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::classifier::MaskedClassifier;
use super::gp::{GridGpSampler, MaskBatch};
use super::image::Image;
use crate::{Error, Result};

/// Masks generated and classified per round in streaming mode.
const STREAM_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    pub width: usize,
    pub height: usize,
    /// Row-major, each value in [0, 1].
    pub values: Vec<f64>,
    pub target_label: String,
}

impl SaliencyMap {
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Writes `<stem>.png` (16-bit grayscale) and `<stem>.f32` (raw little-endian f32).
    pub fn export(&self, stem: impl AsRef<std::path::Path>) -> Result<()> {
        let stem = stem.as_ref();
        let png = stem.with_extension("png");
        super::image::save_gray16(&png, self.width, self.height, &self.values)?;
        let raw: Vec<u8> = self
            .values
            .iter()
            .flat_map(|v| (*v as f32).to_le_bytes())
            .collect();
        let sidecar = stem.with_extension("f32");
        std::fs::write(&sidecar, raw).map_err(|e| Error::io(&sidecar, e))
    }
}

/// Running weighted sum of masks with weights `exp(log_w − max_log_w)`.
///
/// Rescales the accumulators whenever a larger log weight arrives, so the
/// result does not depend on the absolute scale of the probabilities.
struct WeightedMean {
    numer: Vec<f64>,
    denom: f64,
    max_log: f64,
    lo: Vec<f32>,
    hi: Vec<f32>,
}

impl WeightedMean {
    fn new(n: usize) -> Self {
        Self {
            numer: vec![0.0; n],
            denom: 0.0,
            max_log: f64::NEG_INFINITY,
            lo: vec![f32::INFINITY; n],
            hi: vec![f32::NEG_INFINITY; n],
        }
    }

    fn push(&mut self, mask: &[f32], log_w: f64) {
        for ((lo, hi), &m) in self.lo.iter_mut().zip(self.hi.iter_mut()).zip(mask) {
            *lo = lo.min(m);
            *hi = hi.max(m);
        }
        if log_w == f64::NEG_INFINITY {
            return;
        }
        if log_w > self.max_log {
            let scale = (self.max_log - log_w).exp();
            if scale != 1.0 {
                self.numer.iter_mut().for_each(|v| *v *= scale);
                self.denom *= scale;
            }
            self.max_log = log_w;
        }
        let w = (log_w - self.max_log).exp();
        for (acc, &m) in self.numer.iter_mut().zip(mask) {
            *acc += w * f64::from(m);
        }
        self.denom += w;
    }

    fn finish(self) -> Result<Vec<f64>> {
        if !(self.denom > 0.0) {
            return Err(Error::AllMasksRejected);
        }
        Ok(self
            .numer
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(n, (&lo, &hi))| (n / self.denom).clamp(f64::from(lo), f64::from(hi)))
            .collect())
    }
}

fn log_weights<C: MaskedClassifier>(
    classifier: &C,
    image: &Image,
    label: &str,
    masks: &[Vec<f32>],
    first_index: usize,
) -> Result<Vec<f64>> {
    let labels = [label.to_string()];
    masks
        .par_iter()
        .enumerate()
        .map(|(k, mask)| {
            let index = first_index + k;
            let probs = classifier
                .classify(&image.masked(mask), &labels)
                .map_err(|e| Error::Classifier {
                    index,
                    reason: e.to_string(),
                })?;
            match probs.first() {
                Some(p) if p.is_finite() && (0.0..=1.0).contains(p) => Ok(p.ln()),
                other => Err(Error::Classifier {
                    index,
                    reason: format!("invalid probability {other:?}"),
                }),
            }
        })
        .collect()
}

fn check_dims(image: &Image, width: usize, height: usize) -> Result<()> {
    if image.width != width || image.height != height {
        return Err(Error::DimensionMismatch {
            expected: width * height,
            got: image.n_pixels(),
        });
    }
    Ok(())
}

/// `Σ m_i g(y|d⊙m_i) / Σ g(y|d⊙m_i)` over the masks of `batch`.
pub fn expected_saliency<C: MaskedClassifier>(
    classifier: &C,
    image: &Image,
    label: &str,
    batch: &MaskBatch,
) -> Result<SaliencyMap> {
    check_dims(image, batch.width, batch.height)?;
    let logs = log_weights(classifier, image, label, &batch.masks, 0)?;
    let mut acc = WeightedMean::new(image.n_pixels());
    for (mask, lw) in batch.masks.iter().zip(logs) {
        acc.push(mask, lw);
    }
    Ok(SaliencyMap {
        width: batch.width,
        height: batch.height,
        values: acc.finish()?,
        target_label: label.to_string(),
    })
}

/// Same estimate as [`expected_saliency`] over the batch `sampler` would draw
/// for `seed`, without holding every mask in memory.
pub fn expected_saliency_streaming<C: MaskedClassifier>(
    classifier: &C,
    image: &Image,
    label: &str,
    sampler: &GridGpSampler,
    seed: u64,
) -> Result<SaliencyMap> {
    let cfg = sampler.config();
    check_dims(image, cfg.width, cfg.height)?;
    let mut acc = WeightedMean::new(image.n_pixels());
    let mut start = 0;
    while start < cfg.n_masks {
        let end = (start + STREAM_CHUNK).min(cfg.n_masks);
        let masks = sampler.sample_range(seed, start, end);
        let logs = log_weights(classifier, image, label, &masks, start)?;
        for (mask, lw) in masks.iter().zip(logs) {
            acc.push(mask, lw);
        }
        start = end;
    }
    Ok(SaliencyMap {
        width: cfg.width,
        height: cfg.height,
        values: acc.finish()?,
        target_label: label.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saliency::classifier::ConstantClassifier;
    use crate::saliency::gp::{sample_masks, GpMaskConfig};

    /// Probability equal to the masked image's red value at pixel 0.
    struct FirstPixel;

    impl MaskedClassifier for FirstPixel {
        fn classify(&self, image: &Image, labels: &[String]) -> Result<Vec<f64>> {
            Ok(vec![f64::from(image.data[0]); labels.len()])
        }
    }

    struct Failing;

    impl MaskedClassifier for Failing {
        fn classify(&self, _: &Image, _: &[String]) -> Result<Vec<f64>> {
            Err(Error::Protocol("boom".into()))
        }
    }

    fn batch(masks: Vec<Vec<f32>>) -> MaskBatch {
        MaskBatch {
            width: 2,
            height: 1,
            masks,
            seed: 0,
        }
    }

    #[test]
    fn degenerate_weights_select_one_mask() {
        let img = Image::filled(2, 1, [1.0; 3]);
        let b = batch(vec![vec![1.0, 0.25], vec![0.0, 0.75]]);
        let map = expected_saliency(&FirstPixel, &img, "y", &b).unwrap();
        assert_eq!(map.values, vec![1.0, 0.25]);
    }

    #[test]
    fn all_zero_weights_are_rejected() {
        let img = Image::filled(2, 1, [1.0; 3]);
        let b = batch(vec![vec![0.0, 0.5], vec![0.0, 0.75]]);
        assert!(matches!(
            expected_saliency(&FirstPixel, &img, "y", &b),
            Err(Error::AllMasksRejected)
        ));
    }

    #[test]
    fn tiny_probabilities_do_not_underflow() {
        struct Tiny;
        impl MaskedClassifier for Tiny {
            fn classify(&self, image: &Image, _: &[String]) -> Result<Vec<f64>> {
                // 1e-300 and 3e-300 for the two masks below.
                Ok(vec![1e-300 * (1.0 + 2.0 * f64::from(image.data[3]))])
            }
        }
        let img = Image::filled(2, 1, [1.0; 3]);
        let b = batch(vec![vec![0.0, 0.0], vec![0.0, 1.0]]);
        let map = expected_saliency(&Tiny, &img, "y", &b).unwrap();
        assert!((map.values[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn classifier_errors_carry_mask_index() {
        let img = Image::filled(2, 1, [1.0; 3]);
        let b = batch(vec![vec![0.0, 0.5]]);
        match expected_saliency(&Failing, &img, "y", &b) {
            Err(Error::Classifier { index: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch() {
        let img = Image::filled(3, 1, [1.0; 3]);
        let b = batch(vec![vec![0.0, 0.5]]);
        assert!(expected_saliency(&ConstantClassifier(0.5), &img, "y", &b).is_err());
    }

    #[test]
    fn streaming_matches_batch() {
        let cfg = GpMaskConfig {
            width: 10,
            height: 8,
            mean: 0.0,
            marginal_std: 2.0,
            length_scale: 2.0,
            n_masks: 150,
            jitter: 1e-6,
        };
        let img = Image::filled(10, 8, [0.9, 0.2, 0.4]);
        let masks = sample_masks(&cfg, 5).unwrap();
        let sampler = GridGpSampler::new(cfg).unwrap();
        let a = expected_saliency(&FirstPixel, &img, "y", &masks).unwrap();
        let b = expected_saliency_streaming(&FirstPixel, &img, "y", &sampler, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn export_writes_png_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let map = SaliencyMap {
            width: 2,
            height: 2,
            values: vec![0.0, 0.25, 0.5, 1.0],
            target_label: "y".into(),
        };
        let stem = dir.path().join("map");
        map.export(&stem).unwrap();
        let raw = std::fs::read(stem.with_extension("f32")).unwrap();
        assert_eq!(raw.len(), 16);
        assert_eq!(f32::from_le_bytes(raw[4..8].try_into().unwrap()), 0.25);
        let png = image::open(stem.with_extension("png")).unwrap().into_luma16();
        assert_eq!(png.get_pixel(1, 1).0[0], 65535);
        assert_eq!(png.get_pixel(1, 0).0[0], 16384);
    }
}
