#![allow(dead_code)]

use bayesteach::featstore::{FeatureItem, FeatureStore, Split};
use bayesteach::plda::{normal_logpdf, ClassIndex, PldaModel};
use bayesteach::saliency::render::window_span;
use bayesteach::saliency::{blur_window_width, Image, SaliencyMap};
use bayesteach::teach::{CandidateScores, ExamplePair};
use bayesteach::seed;
use bayesteach::trialgen::Prediction;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Model with `A = I`, `m = 0`, so latents equal features.
pub fn identity_model(psi: Vec<f64>) -> PldaModel {
    let q = psi.len();
    PldaModel::from_parts(
        vec![0.0; q],
        DMatrix::identity(q, q),
        DMatrix::identity(q, q),
        psi,
        20.0,
    )
    .unwrap()
}

pub fn item(id: String, category: String, vector: Vec<f64>) -> FeatureItem {
    FeatureItem {
        id,
        category,
        vector,
        image_path: None,
        split: Split::Train,
    }
}

/// Draws from `x = m + A(v + ε)` with `v ~ N(0, diag(psi))`, `ε ~ N(0, I)`.
pub fn latent_store(
    n_classes: usize,
    per_class: usize,
    a: &DMatrix<f64>,
    m: &[f64],
    psi: &[f64],
    seed_value: u64,
) -> FeatureStore {
    let mut rng = seed::rng(seed_value);
    let dim = a.nrows();
    let mut items = Vec::new();
    for c in 0..n_classes {
        let v: Vec<f64> = psi.iter().map(|p| p.sqrt() * normal(&mut rng)).collect();
        for k in 0..per_class {
            let u: Vec<f64> = v.iter().map(|vi| vi + normal(&mut rng)).collect();
            let x: Vec<f64> = (0..dim)
                .map(|i| m[i] + (0..u.len()).map(|j| a[(i, j)] * u[j]).sum::<f64>())
                .collect();
            items.push(item(format!("c{c:03}-{k:02}"), format!("c{c:03}"), x));
        }
    }
    FeatureStore::new(dim, items).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, seed_value: u64) -> DMatrix<f64> {
    let mut rng = seed::rng(seed_value);
    DMatrix::from_fn(rows, cols, |i, j| {
        normal(&mut rng) * 0.5 + if i == j { 1.5 } else { 0.0 }
    })
}

pub const PLANTED_DIM: usize = 6;

/// 100 categories of 20 items in 50 confusable pairs.
///
/// Pair `k` shares a center; its two members are offset in opposite
/// directions by a distance that grows with `k`, so low pairs are hard and
/// high pairs are easy.
pub fn planted_store(seed_value: u64) -> FeatureStore {
    let mut rng = seed::rng(seed_value);
    let mut items = Vec::new();
    for pair in 0..50 {
        let center: Vec<f64> = (0..PLANTED_DIM).map(|_| 6.0 * normal(&mut rng)).collect();
        let mut dir: Vec<f64> = (0..PLANTED_DIM).map(|_| normal(&mut rng)).collect();
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|d| *d /= norm);
        let offset = 0.25 + 2.5 * (pair as f64 / 49.0).powi(2);
        for side in 0..2 {
            let c = 2 * pair + side;
            let sign = if side == 0 { -1.0 } else { 1.0 };
            for k in 0..20 {
                let x: Vec<f64> = (0..PLANTED_DIM)
                    .map(|i| center[i] + sign * offset * dir[i] + normal(&mut rng))
                    .collect();
                items.push(item(format!("img{c:03}-{k:02}"), format!("cat{c:03}"), x));
            }
        }
    }
    FeatureStore::new(PLANTED_DIM, items).unwrap()
}

/// Predictions of the PLDA class index over every item of `store`.
pub fn plda_predictions(model: &PldaModel, store: &FeatureStore) -> Vec<Prediction> {
    let index = ClassIndex::build(model, store).unwrap();
    store
        .items()
        .iter()
        .map(|it| Prediction {
            item: it.id.clone(),
            ground_truth: it.category.clone(),
            predicted: index.predict(model, &it.vector).unwrap(),
        })
        .collect()
}

/// `p(u* | u1, u2)` for one latent coordinate set, by brute-force integration
/// over the class center `v` on a regular grid (1-D or 2-D).
pub fn grid_predictive(psi: &[f64], u_star: &[f64], u1: &[f64], u2: &[f64]) -> f64 {
    const STEPS: usize = 241;
    let axes: Vec<Vec<f64>> = psi
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let center = p / (2.0 * p + 1.0) * (u1[j] + u2[j]);
            let half = 12.0 * (p / (2.0 * p + 1.0)).sqrt();
            (0..STEPS)
                .map(|s| center - half + 2.0 * half * s as f64 / (STEPS - 1) as f64)
                .collect()
        })
        .collect();
    let lik = |v: &[f64], with_star: bool| -> f64 {
        let mut log = 0.0;
        for j in 0..v.len() {
            log += normal_logpdf(v[j], 0.0, psi[j]);
            log += normal_logpdf(u1[j], v[j], 1.0) + normal_logpdf(u2[j], v[j], 1.0);
            if with_star {
                log += normal_logpdf(u_star[j], v[j], 1.0);
            }
        }
        log.exp()
    };
    let (mut num, mut den) = (0.0, 0.0);
    let mut visit = |v: &[f64]| {
        num += lik(v, true);
        den += lik(v, false);
    };
    match axes.len() {
        1 => axes[0].iter().for_each(|&a| visit(&[a])),
        2 => {
            for &a in &axes[0] {
                for &b in &axes[1] {
                    visit(&[a, b]);
                }
            }
        }
        _ => unreachable!(),
    }
    num / den
}

/// Direct evaluation of every candidate's `f_L` from the pair ids alone.
pub fn naive_fidelity(model: &PldaModel, store: &FeatureStore, scores: &CandidateScores) -> Vec<Vec<f64>> {
    let lat = |id: &str| model.to_latent(&store.get(id).unwrap().vector).unwrap();
    let us = lat(&scores.target);
    let density = |p: &ExamplePair| {
        model
            .pair_logdensity(&us, &lat(&p.item_a), &lat(&p.item_b))
            .unwrap()
    };
    scores
        .pairs_target
        .iter()
        .map(|pt| {
            scores
                .pairs_alt
                .iter()
                .map(|pa| {
                    let (lt, la) = (density(pt), density(pa));
                    let top = lt.max(la);
                    let (et, ea) = ((lt - top).exp(), (la - top).exp());
                    et / (et + ea)
                })
                .collect()
        })
        .collect()
}

pub fn empirical_cov(draws: &[DVector<f64>]) -> DMatrix<f64> {
    let n = draws[0].len();
    let mean = draws.iter().fold(DVector::zeros(n), |acc, d| acc + d) / draws.len() as f64;
    let mut cov = DMatrix::zeros(n, n);
    for d in draws {
        let c = d - &mean;
        cov += &c * c.transpose();
    }
    cov / (draws.len() - 1) as f64
}

/// Dense RBF kernel over a `side × side` grid in row-major pixel order.
pub fn dense_kernel(side: usize, length_scale: f64, jitter: f64) -> DMatrix<f64> {
    let n = side * side;
    DMatrix::from_fn(n, n, |a, b| {
        let (ya, xa) = ((a / side) as f64, (a % side) as f64);
        let (yb, xb) = ((b / side) as f64, (b % side) as f64);
        let d2 = (ya - yb).powi(2) + (xa - xb).powi(2);
        (-0.5 * d2 / (length_scale * length_scale)).exp() + if a == b { jitter } else { 0.0 }
    })
}

/// Per-pixel window average by direct summation.
pub fn naive_blur(img: &Image, map: &SaliencyMap) -> Image {
    let (w, h) = (img.width, img.height);
    let mut out = img.data.clone();
    for y in 0..h {
        for x in 0..w {
            let win = blur_window_width(map.at(x, y));
            if win == 1 {
                continue;
            }
            let (x0, x1) = window_span(x, win, w);
            let (y0, y1) = window_span(y, win, h);
            for c in 0..3 {
                let mut s = 0.0f64;
                for yy in y0..=y1 {
                    for xx in x0..=x1 {
                        s += f64::from(img.data[(yy * w + xx) * 3 + c]);
                    }
                }
                out[(y * w + x) * 3 + c] = (s / ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64) as f32;
            }
        }
    }
    Image::new(w, h, out).unwrap()
}
