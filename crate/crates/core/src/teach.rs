//! Example selection by simulated explainee fidelity.
//!
//! A candidate is one pair of training items from the model-predicted
//! category `y*` and one pair from the alternative `y`. The explainee's
//! 2AFC inference on the target `d*` is
//!
//! ```text
//! f_L = f(d*|t_y*) / (f(d*|t_y*) + f(d*|t_y)) = σ(log f(d*|t_y*) − log f(d*|t_y))
//! ```
//!
//! and the teaching posterior normalizes `f_L` over the enumerated candidate
//! space. Log densities are computed once per pair (`2K` evaluations) and the
//! `K × K` fidelity matrix is filled from the cache.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::featstore::FeatureStore;
use crate::plda::{LatentVector, PldaModel};
use crate::{seed, Error, Result};

pub const DEFAULT_K: usize = 1000;
pub const HELPFUL_THRESHOLD: f64 = 0.8;
pub const UNHELPFUL_THRESHOLD: f64 = 0.2;
pub const N_BINS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamplePair {
    pub item_a: String,
    pub item_b: String,
    pub category: String,
    /// `log f(d*|pair)` for the target this pair was scored against.
    pub log_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeachingCandidate {
    pub pair_target: ExamplePair,
    pub pair_alt: ExamplePair,
    pub f_l: f64,
    pub posterior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScores {
    pub target: String,
    pub y_star: String,
    pub y_alt: String,
    pub pairs_target: Vec<ExamplePair>,
    pub pairs_alt: Vec<ExamplePair>,
    #[serde(rename = "f_L")]
    pub fidelity: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// `f_L` above the helpful threshold.
    Helpful,
    /// `f_L` in bin `b` of five equal bins over [0, 1].
    RandomBin(u8),
    /// `f_L` below the unhelpful threshold.
    Unhelpful,
    /// `f_L` in `[lo, hi)`, or `[lo, hi]` when `hi >= 1`.
    Interval { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub helpful: f64,
    pub unhelpful: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            helpful: HELPFUL_THRESHOLD,
            unhelpful: UNHELPFUL_THRESHOLD,
        }
    }
}

/// Bounds of bin `b` out of [`N_BINS`]; the last bin is closed at 1.
pub fn bin_bounds(bin: u8) -> (f64, f64) {
    let b = f64::from(bin);
    (b / N_BINS as f64, (b + 1.0) / N_BINS as f64)
}

/// Bin of an `f_L` value.
pub fn bin_of(f_l: f64) -> u8 {
    ((f_l * N_BINS as f64).floor() as i64).clamp(0, N_BINS as i64 - 1) as u8
}

impl SelectionPolicy {
    pub fn accepts(&self, f_l: f64, thresholds: &Thresholds) -> bool {
        match *self {
            SelectionPolicy::Helpful => f_l > thresholds.helpful,
            SelectionPolicy::Unhelpful => f_l < thresholds.unhelpful,
            SelectionPolicy::RandomBin(b) => {
                let (lo, hi) = bin_bounds(b);
                f_l >= lo && (f_l < hi || (b as usize == N_BINS - 1 && f_l <= 1.0))
            }
            SelectionPolicy::Interval { lo, hi } => f_l >= lo && (f_l < hi || (hi >= 1.0 && f_l <= 1.0)),
        }
    }

    /// Distance from `f_l` to the accepted set.
    fn distance(&self, f_l: f64, thresholds: &Thresholds) -> f64 {
        let (lo, hi) = match *self {
            SelectionPolicy::Helpful => (thresholds.helpful, 1.0),
            SelectionPolicy::Unhelpful => (0.0, thresholds.unhelpful),
            SelectionPolicy::RandomBin(b) => bin_bounds(b),
            SelectionPolicy::Interval { lo, hi } => (lo, hi),
        };
        if f_l < lo {
            lo - f_l
        } else if f_l > hi {
            f_l - hi
        } else {
            0.0
        }
    }
}

/// Logistic function, stable for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Simulated explainee fidelity from cached log densities of the two sides.
pub fn fidelity_from_logs(log_target: f64, log_alt: f64) -> f64 {
    sigmoid(log_target - log_alt)
}

/// `f_L(y* | t_y*, t_y, d*)` for two scored pairs.
pub fn simulated_explainee_fidelity(pair_target: &ExamplePair, pair_alt: &ExamplePair) -> f64 {
    fidelity_from_logs(pair_target.log_density, pair_alt.log_density)
}

/// `f_L` computed from latents, without relying on cached values.
pub fn simulated_explainee_fidelity_latent(
    model: &PldaModel,
    u_star: &LatentVector,
    target_pair: (&LatentVector, &LatentVector),
    alt_pair: (&LatentVector, &LatentVector),
) -> Result<f64> {
    let lt = model.pair_logdensity(u_star, target_pair.0, target_pair.1)?;
    let la = model.pair_logdensity(u_star, alt_pair.0, alt_pair.1)?;
    Ok(fidelity_from_logs(lt, la))
}

/// Unordered pair `(i, j)`, `i < j`, at rank `r` of the colex order.
fn unrank_pair(r: usize) -> (usize, usize) {
    // r = j(j-1)/2 + i with 0 <= i < j.
    let mut j = ((1.0 + (1.0 + 8.0 * r as f64).sqrt()) / 2.0).floor() as usize;
    while j * (j - 1) / 2 > r {
        j -= 1;
    }
    while (j + 1) * j / 2 <= r {
        j += 1;
    }
    (r - j * (j - 1) / 2, j)
}

/// Samples `k` distinct unordered pairs of training items from `category`,
/// never using `exclude`. Returns all pairs when fewer than `k` exist.
/// Returned pairs carry `log_density = NaN` until scored.
pub fn enumerate_pairs(
    store: &FeatureStore,
    category: &str,
    k: usize,
    exclude: Option<&str>,
    seed: u64,
) -> Result<Vec<ExamplePair>> {
    let eligible = store.train_indices(category, exclude)?;
    let n = eligible.len();
    if n < 2 {
        return Err(Error::TooFewItems {
            category: category.to_string(),
            count: n,
        });
    }
    let total = n * (n - 1) / 2;
    let ranks: Vec<usize> = if k >= total {
        (0..total).collect()
    } else {
        let mut rng = seed::rng(seed);
        index::sample(&mut rng, total, k).into_vec()
    };
    Ok(ranks
        .into_iter()
        .map(|r| {
            let (i, j) = unrank_pair(r);
            ExamplePair {
                item_a: store.item(eligible[i]).id.clone(),
                item_b: store.item(eligible[j]).id.clone(),
                category: category.to_string(),
                log_density: f64::NAN,
            }
        })
        .collect())
}

/// Something that can evaluate the pair-conditional log density.
pub trait PairDensity: Sync {
    fn pair_logdensity(
        &self,
        u_star: &LatentVector,
        u1: &LatentVector,
        u2: &LatentVector,
    ) -> Result<f64>;
}

impl PairDensity for PldaModel {
    fn pair_logdensity(
        &self,
        u_star: &LatentVector,
        u1: &LatentVector,
        u2: &LatentVector,
    ) -> Result<f64> {
        PldaModel::pair_logdensity(self, u_star, u1, u2)
    }
}

/// Wraps a [`PairDensity`] and counts evaluations.
pub struct CountingDensity<'a, D> {
    inner: &'a D,
    calls: AtomicUsize,
}

impl<'a, D: PairDensity> CountingDensity<'a, D> {
    pub fn new(inner: &'a D) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl<D: PairDensity> PairDensity for CountingDensity<'_, D> {
    fn pair_logdensity(
        &self,
        u_star: &LatentVector,
        u1: &LatentVector,
        u2: &LatentVector,
    ) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.pair_logdensity(u_star, u1, u2)
    }
}

/// Latent coordinates of every item in `store`, computed once and shared.
pub struct LatentCache {
    latents: Vec<LatentVector>,
}

impl LatentCache {
    pub fn build(model: &PldaModel, store: &FeatureStore) -> Result<Self> {
        let latents = store
            .items()
            .par_iter()
            .map(|it| model.to_latent(&it.vector))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { latents })
    }

    pub fn get(&self, index: usize) -> &LatentVector {
        &self.latents[index]
    }
}

fn score_pairs<D: PairDensity>(
    density: &D,
    store: &FeatureStore,
    latents: &LatentCache,
    u_star: &LatentVector,
    pairs: &mut [ExamplePair],
) -> Result<()> {
    pairs.par_iter_mut().try_for_each(|p| {
        let a = latents.get(store.index_of(&p.item_a)?);
        let b = latents.get(store.index_of(&p.item_b)?);
        p.log_density = density.pair_logdensity(u_star, a, b)?;
        Ok(())
    })
}

/// Scores the candidate space for `target` with `k` random pairs per side.
pub fn score_candidate_space(
    model: &PldaModel,
    store: &FeatureStore,
    target: &str,
    y_star: &str,
    y_alt: &str,
    k: usize,
    seed: u64,
) -> Result<CandidateScores> {
    let latents = LatentCache::build(model, store)?;
    score_candidate_space_with(model, store, &latents, target, y_star, y_alt, k, seed)
}

/// [`score_candidate_space`] with an explicit density evaluator and latent cache.
#[allow(clippy::too_many_arguments)]
pub fn score_candidate_space_with<D: PairDensity>(
    density: &D,
    store: &FeatureStore,
    latents: &LatentCache,
    target: &str,
    y_star: &str,
    y_alt: &str,
    k: usize,
    seed: u64,
) -> Result<CandidateScores> {
    let target_index = store.index_of(target)?;
    let u_star = latents.get(target_index);
    let mut pairs_target = enumerate_pairs(
        store,
        y_star,
        k,
        Some(target),
        crate::seed::derive(seed, "pairs/target", 0),
    )?;
    let mut pairs_alt = enumerate_pairs(
        store,
        y_alt,
        k,
        Some(target),
        crate::seed::derive(seed, "pairs/alt", 0),
    )?;
    score_pairs(density, store, latents, u_star, &mut pairs_target)?;
    score_pairs(density, store, latents, u_star, &mut pairs_alt)?;

    let fidelity = pairs_target
        .par_iter()
        .map(|pt| {
            pairs_alt
                .iter()
                .map(|pa| fidelity_from_logs(pt.log_density, pa.log_density))
                .collect()
        })
        .collect();

    Ok(CandidateScores {
        target: target.to_string(),
        y_star: y_star.to_string(),
        y_alt: y_alt.to_string(),
        pairs_target,
        pairs_alt,
        fidelity,
    })
}

/// Bayesian Teaching posterior over the enumerated candidates (uniform prior).
pub fn teaching_posterior(scores: &CandidateScores) -> Vec<Vec<f64>> {
    let total: f64 = scores.fidelity.iter().flatten().sum();
    assert!(
        total > 0.0 && total.is_finite(),
        "fidelity matrix sums to {total}"
    );
    scores
        .fidelity
        .iter()
        .map(|row| row.iter().map(|f| f / total).collect())
        .collect()
}

/// Picks one candidate uniformly among those accepted by `policy`.
pub fn select_examples(
    scores: &CandidateScores,
    policy: SelectionPolicy,
    seed: u64,
) -> Result<TeachingCandidate> {
    select_examples_with(scores, policy, &Thresholds::default(), seed)
}

pub fn select_examples_with(
    scores: &CandidateScores,
    policy: SelectionPolicy,
    thresholds: &Thresholds,
    seed: u64,
) -> Result<TeachingCandidate> {
    let mut qualifying = Vec::new();
    let mut nearest = f64::NAN;
    let mut best_gap = f64::INFINITY;
    let mut total = 0.0;
    for (i, row) in scores.fidelity.iter().enumerate() {
        for (j, &f) in row.iter().enumerate() {
            total += f;
            if policy.accepts(f, thresholds) {
                qualifying.push((i, j));
            } else {
                let gap = policy.distance(f, thresholds);
                if gap < best_gap {
                    best_gap = gap;
                    nearest = f;
                }
            }
        }
    }
    if qualifying.is_empty() {
        return Err(Error::NoQualifyingCandidate { nearest });
    }
    let mut rng = seed::rng(seed);
    let (i, j) = qualifying[rng.random_range(0..qualifying.len())];
    let f_l = scores.fidelity[i][j];
    Ok(TeachingCandidate {
        pair_target: scores.pairs_target[i].clone(),
        pair_alt: scores.pairs_alt[j].clone(),
        f_l,
        posterior: f_l / total,
    })
}
