//! Blur and jet renderings of a saliency map.

use super::expect::SaliencyMap;
use super::image::Image;
use crate::{Error, Result};

pub const DEFAULT_JET_ALPHA: f64 = 0.4;

/// Window width for saliency value `z`: `ceil(30 / (1 + exp(20z − 10)))`.
///
/// Ranges from 30 at `z = 0` down to 1 at `z = 1`.
pub fn blur_window_width(z: f64) -> usize {
    (30.0 / (1.0 + (20.0 * z - 10.0).exp())).ceil().max(1.0) as usize
}

/// Pixel span `[lo, hi]` of a width-`w` window centered on `c`, clipped to `[0, n)`.
///
/// Even widths extend one pixel further toward larger coordinates.
pub fn window_span(c: usize, w: usize, n: usize) -> (usize, usize) {
    let before = (w - 1) / 2;
    let after = w / 2;
    (c.saturating_sub(before), (c + after).min(n - 1))
}

fn check_dims(image: &Image, map: &SaliencyMap) -> Result<()> {
    if image.width != map.width || image.height != map.height {
        return Err(Error::DimensionMismatch {
            expected: image.n_pixels(),
            got: map.width * map.height,
        });
    }
    Ok(())
}

/// Replaces each pixel with the mean of the `w(z) × w(z)` window around it,
/// where `z` is the map value at that pixel. Windows are clipped at the image
/// border and averaged over the pixels that remain.
pub fn render_blur(image: &Image, map: &SaliencyMap) -> Result<Image> {
    check_dims(image, map)?;
    let (w, h) = (image.width, image.height);
    // Summed-area table with a zero border: sat[(y, x)] = sum over rows < y, cols < x.
    let stride = (w + 1) * 3;
    let mut sat = vec![0.0f64; (h + 1) * stride];
    for y in 0..h {
        let mut row = [0.0f64; 3];
        for x in 0..w {
            for c in 0..3 {
                row[c] += f64::from(image.data[(y * w + x) * 3 + c]);
                sat[(y + 1) * stride + (x + 1) * 3 + c] = sat[y * stride + (x + 1) * 3 + c] + row[c];
            }
        }
    }

    let mut out = image.data.clone();
    for y in 0..h {
        for x in 0..w {
            let win = blur_window_width(map.at(x, y));
            if win == 1 {
                continue;
            }
            let (x0, x1) = window_span(x, win, w);
            let (y0, y1) = window_span(y, win, h);
            let count = ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64;
            for c in 0..3 {
                let s = sat[(y1 + 1) * stride + (x1 + 1) * 3 + c] - sat[y0 * stride + (x1 + 1) * 3 + c]
                    - sat[(y1 + 1) * stride + x0 * 3 + c]
                    + sat[y0 * stride + x0 * 3 + c];
                out[(y * w + x) * 3 + c] = (s / count) as f32;
            }
        }
    }
    Image::new(w, h, out)
}

/// Breakpoints `(x, value)` of the jet colormap, per channel.
///
/// These are the segment tables of matplotlib's `jet`: dark blue at 0,
/// through cyan, green and yellow, to dark red at 1.
const JET_RED: &[(f64, f64)] = &[(0.0, 0.0), (0.35, 0.0), (0.66, 1.0), (0.89, 1.0), (1.0, 0.5)];
const JET_GREEN: &[(f64, f64)] = &[
    (0.0, 0.0),
    (0.125, 0.0),
    (0.375, 1.0),
    (0.64, 1.0),
    (0.91, 0.0),
    (1.0, 0.0),
];
const JET_BLUE: &[(f64, f64)] = &[(0.0, 0.5), (0.11, 1.0), (0.34, 1.0), (0.65, 0.0), (1.0, 0.0)];

fn piecewise(points: &[(f64, f64)], z: f64) -> f64 {
    let z = z.clamp(0.0, 1.0);
    for pair in points.windows(2) {
        let ((x0, y0), (x1, y1)) = (pair[0], pair[1]);
        if z <= x1 {
            return y0 + (y1 - y0) * (z - x0) / (x1 - x0);
        }
    }
    points[points.len() - 1].1
}

/// Jet color for `z` in [0, 1] (values outside are clamped).
pub fn jet(z: f64) -> [f64; 3] {
    [piecewise(JET_RED, z), piecewise(JET_GREEN, z), piecewise(JET_BLUE, z)]
}

/// Alpha-blends the jet-colored map over the image: `(1 − α)·image + α·jet(z)`.
pub fn render_jet(image: &Image, map: &SaliencyMap, alpha: f64) -> Result<Image> {
    check_dims(image, map)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!("alpha {alpha} outside [0, 1]")));
    }
    let data = image
        .data
        .chunks_exact(3)
        .zip(&map.values)
        .flat_map(|(px, &z)| {
            let color = jet(z);
            std::array::from_fn::<f32, 3, _>(|c| {
                ((1.0 - alpha) * f64::from(px[c]) + alpha * color[c]) as f32
            })
        })
        .collect();
    Image::new(image.width, image.height, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(w: usize, h: usize, values: Vec<f64>) -> SaliencyMap {
        SaliencyMap {
            width: w,
            height: h,
            values,
            target_label: "y".into(),
        }
    }

    #[test]
    fn window_width_formula() {
        assert_eq!(blur_window_width(0.5), 15);
        assert_eq!(blur_window_width(1.0), 1);
        assert_eq!(blur_window_width(0.0), 30);
        // 30 / (1 + e^10) ≈ 0.00136
        let raw = 30.0 / (1.0 + 10f64.exp());
        assert!((raw - 0.001_361_9).abs() < 1e-6);
    }

    #[test]
    fn window_span_even_and_odd() {
        assert_eq!(window_span(5, 3, 10), (4, 6));
        assert_eq!(window_span(5, 2, 10), (5, 6));
        assert_eq!(window_span(0, 30, 10), (0, 9));
        assert_eq!(window_span(9, 4, 10), (8, 9));
    }

    #[test]
    fn full_map_is_identity() {
        let data: Vec<f32> = (0..5 * 4 * 3).map(|i| (i as f32 * 0.37).sin().abs()).collect();
        let img = Image::new(5, 4, data).unwrap();
        let out = render_blur(&img, &map(5, 4, vec![1.0; 20])).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn zero_map_on_small_image_averages_everything() {
        let img = Image::new(2, 1, vec![0.0, 0.5, 1.0, 1.0, 0.5, 0.0]).unwrap();
        let out = render_blur(&img, &map(2, 1, vec![0.0, 0.0])).unwrap();
        assert_eq!(out.data, vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn jet_endpoints() {
        assert_eq!(jet(0.0), [0.0, 0.0, 0.5]);
        assert_eq!(jet(1.0), [0.5, 0.0, 0.0]);
        let mid = jet(0.5);
        assert_eq!(mid[1], 1.0);
        assert!(mid[0] < mid[1] && mid[2] < mid[1]);
        assert!((mid[0] - 0.15 / 0.31).abs() < 1e-12);
        assert!((mid[2] - (1.0 - 0.16 / 0.31)).abs() < 1e-12);
    }

    #[test]
    fn jet_overlay_on_black() {
        let img = Image::filled(1, 1, [0.0; 3]);
        let out = render_jet(&img, &map(1, 1, vec![1.0]), 0.4).unwrap();
        assert_eq!(out.data, vec![0.2f32, 0.0, 0.0]);
    }

    #[test]
    fn jet_alpha_zero_is_identity() {
        let data: Vec<f32> = (0..3 * 3 * 3).map(|i| i as f32 / 29.0).collect();
        let img = Image::new(3, 3, data).unwrap();
        let out = render_jet(&img, &map(3, 3, (0..9).map(|i| i as f64 / 8.0).collect()), 0.0).unwrap();
        assert_eq!(out, img);
        assert!(render_jet(&img, &map(3, 3, vec![0.0; 9]), 1.5).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let img = Image::filled(2, 2, [0.0; 3]);
        assert!(render_blur(&img, &map(1, 4, vec![0.0; 4])).is_err());
    }
}
