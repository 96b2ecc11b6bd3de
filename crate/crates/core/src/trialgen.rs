//! 2AFC trial set assembly.
//!
//! Categories are picked from the model's confusion matrix (easy, hard and
//! their most confusable partners). Targets are sampled from images whose
//! label and prediction both fall inside the picked categories, split into
//! model-correct and model-error trials. For correct trials the alternative
//! option is one of the two categories most confusable with the prediction;
//! for error trials it is the ground truth. Example pairs come from
//! [`crate::teach`] under the set's examples policy.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::featstore::FeatureStore;
use crate::plda::PldaModel;
use crate::teach::{
    self, bin_bounds, SelectionPolicy, TeachingCandidate, Thresholds, N_BINS,
};
use crate::{seed, Error, Result};

/// Number of raters behind each familiarity score.
pub const N_RATERS: usize = 7;
/// Extra targets tried for a trial before giving up on its policy.
pub const MAX_RETRIES: usize = 20;
/// Amount a random-policy bin is widened on each side as a last resort.
pub const BIN_WIDENING: f64 = 0.1;
/// Subset size (easiest / hardest categories) at full scale.
pub const FULL_SCALE_SUBSET: usize = 100;
pub const FULL_SCALE_CATEGORIES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub item: String,
    pub ground_truth: String,
    pub predicted: String,
}

/// Reads `id,ground_truth,predicted` rows.
pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        if row.len() != 3 {
            return Err(Error::PayloadMismatch(format!(
                "prediction row has {} fields, expected 3",
                row.len()
            )));
        }
        out.push(Prediction {
            item: row[0].to_string(),
            ground_truth: row[1].to_string(),
            predicted: row[2].to_string(),
        });
    }
    Ok(out)
}

pub fn write_predictions(path: impl AsRef<Path>, predictions: &[Prediction]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["id", "ground_truth", "predicted"])?;
    for p in predictions {
        w.write_record([&p.item, &p.ground_truth, &p.predicted])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub categories: Vec<String>,
    /// Rows are ground truth, columns are predictions.
    pub counts: Vec<Vec<u64>>,
    pub per_category_accuracy: Vec<f64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

/// Tabulates `predictions` over the ordered category list `categories`.
pub fn confusion_matrix(predictions: &[Prediction], categories: &[String]) -> Result<ConfusionMatrix> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput("predictions"));
    }
    let index: HashMap<String, usize> = categories
        .iter()
        .enumerate()
        .map(|(i, c)| (c.clone(), i))
        .collect();
    let c = categories.len();
    let mut counts = vec![vec![0u64; c]; c];
    for p in predictions {
        let row = *index
            .get(&p.ground_truth)
            .ok_or_else(|| Error::UnknownCategory(p.ground_truth.clone()))?;
        let col = *index
            .get(&p.predicted)
            .ok_or_else(|| Error::UnknownCategory(p.predicted.clone()))?;
        counts[row][col] += 1;
    }
    let per_category_accuracy = counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total: u64 = row.iter().sum();
            if total == 0 {
                0.0
            } else {
                row[i] as f64 / total as f64
            }
        })
        .collect();
    Ok(ConfusionMatrix {
        categories: categories.to_vec(),
        counts,
        per_category_accuracy,
        index,
    })
}

impl ConfusionMatrix {
    fn position(&self, category: &str) -> Result<usize> {
        if self.index.is_empty() && !self.categories.is_empty() {
            // Deserialized matrices have no index; fall back to a scan.
            return self
                .categories
                .iter()
                .position(|c| c == category)
                .ok_or_else(|| Error::UnknownCategory(category.to_string()));
        }
        self.index
            .get(category)
            .copied()
            .ok_or_else(|| Error::UnknownCategory(category.to_string()))
    }

    pub fn row_total(&self, category: &str) -> Result<u64> {
        Ok(self.counts[self.position(category)?].iter().sum())
    }

    pub fn accuracy(&self, category: &str) -> Result<f64> {
        Ok(self.per_category_accuracy[self.position(category)?])
    }

    /// Confusions between two distinct categories, in both directions.
    pub fn confusion(&self, a: &str, b: &str) -> Result<u64> {
        let (i, j) = (self.position(a)?, self.position(b)?);
        Ok(self.counts[i][j] + self.counts[j][i])
    }

    /// The `n` categories most confused with `category`, restricted to
    /// `within` when given. Never includes `category` itself. Ties are broken
    /// by category id.
    pub fn most_confusable(
        &self,
        category: &str,
        within: Option<&BTreeSet<String>>,
        n: usize,
    ) -> Result<Vec<String>> {
        let i = self.position(category)?;
        let mut others: Vec<(u64, &String)> = self
            .categories
            .iter()
            .enumerate()
            .filter(|(j, c)| *j != i && within.is_none_or(|w| w.contains(*c)))
            .map(|(j, c)| (self.counts[i][j] + self.counts[j][i], c))
            .collect();
        others.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        Ok(others.into_iter().take(n).map(|(_, c)| c.clone()).collect())
    }
}

/// Easiest/hardest subset size for a matrix with `c` populated categories.
pub fn subset_size(c: usize) -> usize {
    if c >= FULL_SCALE_CATEGORIES {
        FULL_SCALE_SUBSET
    } else {
        c.div_ceil(10)
    }
}

/// Picks `pool_size` categories at random from each of: the most accurate,
/// their most confusable partners, the least accurate, and their most
/// confusable partners. Returns the sorted union.
pub fn select_categories(cm: &ConfusionMatrix, pool_size: usize, seed: u64) -> Result<Vec<String>> {
    let populated: Vec<usize> = (0..cm.categories.len())
        .filter(|&i| cm.counts[i].iter().sum::<u64>() > 0)
        .collect();
    let s = subset_size(populated.len());
    if populated.len() < 2 || s < pool_size || pool_size == 0 {
        return Err(Error::InsufficientPool(format!(
            "{} populated categories give subsets of {s}, cannot draw {pool_size} from each",
            populated.len()
        )));
    }
    let mut by_acc = populated.clone();
    by_acc.sort_by(|&a, &b| {
        cm.per_category_accuracy[b]
            .total_cmp(&cm.per_category_accuracy[a])
            .then_with(|| cm.categories[a].cmp(&cm.categories[b]))
    });
    let easy: Vec<String> = by_acc[..s].iter().map(|&i| cm.categories[i].clone()).collect();
    let hard: Vec<String> = by_acc[by_acc.len() - s..]
        .iter()
        .rev()
        .map(|&i| cm.categories[i].clone())
        .collect();
    let partners = |cats: &[String]| -> Result<Vec<String>> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for c in cats {
            if let Some(p) = cm.most_confusable(c, None, 1)?.into_iter().next() {
                if seen.insert(p.clone()) {
                    out.push(p);
                }
            }
        }
        Ok(out)
    };
    let subsets = [
        ("easy", easy.clone()),
        ("easy-confusable", partners(&easy)?),
        ("hard", hard.clone()),
        ("hard-confusable", partners(&hard)?),
    ];
    let mut picked = BTreeSet::new();
    for (name, subset) in subsets {
        let mut rng = seed::rng(seed::derive(seed, name, 0));
        picked.extend(subset.choose_multiple(&mut rng, pool_size).cloned());
    }
    Ok(picked.into_iter().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelsCondition {
    Specific,
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExamplesPolicy {
    None,
    Helpful,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapCondition {
    None,
    Blur,
    Jet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConditionFlags {
    pub labels: LabelsCondition,
    pub examples: ExamplesPolicy,
    pub map: MapCondition,
}

impl ConditionFlags {
    /// Generic labels without examples leave nothing to go on and are not run.
    pub fn is_valid(&self) -> bool {
        !(self.labels == LabelsCondition::Generic && self.examples == ExamplesPolicy::None)
    }

    /// The 15 runnable conditions.
    pub fn all() -> Vec<ConditionFlags> {
        let mut out = Vec::new();
        for labels in [LabelsCondition::Specific, LabelsCondition::Generic] {
            for examples in [ExamplesPolicy::None, ExamplesPolicy::Helpful, ExamplesPolicy::Random] {
                for map in [MapCondition::None, MapCondition::Blur, MapCondition::Jet] {
                    let c = ConditionFlags {
                        labels,
                        examples,
                        map,
                    };
                    if c.is_valid() {
                        out.push(c);
                    }
                }
            }
        }
        out
    }
}

/// Rendered files for a trial, relative to the asset root.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialAssets {
    pub target: Option<String>,
    /// `y*` pair then `y` pair.
    #[serde(default)]
    pub examples: Vec<String>,
    /// Saliency maps for target then examples.
    #[serde(default)]
    pub maps: Vec<String>,
    #[serde(default)]
    pub blur: Vec<String>,
    #[serde(default)]
    pub jet: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub target: String,
    pub y_star: String,
    pub y_alt: String,
    pub ground_truth: String,
    pub model_correct: bool,
    pub category_accuracy: f64,
    pub examples: Option<TeachingCandidate>,
    #[serde(rename = "f_L")]
    pub f_l: Option<f64>,
    /// Assigned random-policy bin.
    pub bin: Option<u8>,
    #[serde(default)]
    pub bin_widened: bool,
    pub familiarity: Option<f64>,
    pub condition: ConditionFlags,
    #[serde(default)]
    pub assets: TrialAssets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSet {
    pub trials: Vec<Trial>,
    pub seed: u64,
    pub policy: ExamplesPolicy,
    pub categories: Vec<String>,
}

impl TrialSet {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_vec_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn n_correct(&self) -> usize {
        self.trials.iter().filter(|t| t.model_correct).count()
    }

    pub fn n_incorrect(&self) -> usize {
        self.trials.len() - self.n_correct()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssemblyConfig {
    pub n_correct: usize,
    pub n_incorrect: usize,
    /// Pairs sampled per side of the candidate space.
    pub k: usize,
    pub thresholds: Thresholds,
    pub max_retries: usize,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        Self {
            n_correct: 50,
            n_incorrect: 100,
            k: teach::DEFAULT_K,
            thresholds: Thresholds::default(),
            max_retries: MAX_RETRIES,
        }
    }
}

/// Exactly balanced bins for `n` trials (remainder to the low bins), shuffled.
pub fn assign_bins(n: usize, seed: u64) -> Vec<u8> {
    let mut bins: Vec<u8> = (0..n).map(|i| (i % N_BINS) as u8).collect();
    bins.sort_unstable();
    let mut rng = seed::rng(seed);
    bins.shuffle(&mut rng);
    bins
}

struct Context<'a> {
    store: &'a FeatureStore,
    model: &'a PldaModel,
    latents: teach::LatentCache,
    cm: &'a ConfusionMatrix,
    cats: BTreeSet<String>,
    policy: ExamplesPolicy,
    config: &'a AssemblyConfig,
    seed: u64,
}

impl Context<'_> {
    fn build(
        &self,
        slot: usize,
        attempt: usize,
        target: &Prediction,
        bin: Option<u8>,
        widen: bool,
    ) -> Result<Trial> {
        let model_correct = target.predicted == target.ground_truth;
        let y_alt = if model_correct {
            let options = self
                .cm
                .most_confusable(&target.predicted, Some(&self.cats), 2)?;
            if options.is_empty() {
                return Err(Error::InsufficientPool(format!(
                    "no alternative category for {}",
                    target.predicted
                )));
            }
            let mut rng = seed::rng(seed::derive(self.seed, "alt", (slot * 1000 + attempt) as u64));
            options[rng.random_range(0..options.len())].clone()
        } else {
            target.ground_truth.clone()
        };

        let selection = match (self.policy, bin) {
            (ExamplesPolicy::None, _) => None,
            (ExamplesPolicy::Helpful, _) => Some(SelectionPolicy::Helpful),
            (ExamplesPolicy::Random, Some(b)) if widen => {
                let (lo, hi) = bin_bounds(b);
                Some(SelectionPolicy::Interval {
                    lo: (lo - BIN_WIDENING).max(0.0),
                    hi: (hi + BIN_WIDENING).min(1.0),
                })
            }
            (ExamplesPolicy::Random, Some(b)) => Some(SelectionPolicy::RandomBin(b)),
            (ExamplesPolicy::Random, None) => unreachable!("random policy assigns bins"),
        };

        let examples = match selection {
            None => None,
            Some(sel) => {
                let trial_seed = seed::derive(self.seed, "trial", (slot * 1000 + attempt) as u64);
                let scores = teach::score_candidate_space_with(
                    self.model,
                    self.store,
                    &self.latents,
                    &target.item,
                    &target.predicted,
                    &y_alt,
                    self.config.k,
                    trial_seed,
                )?;
                Some(teach::select_examples_with(
                    &scores,
                    sel,
                    &self.config.thresholds,
                    seed::derive(trial_seed, "select", 0),
                )?)
            }
        };

        Ok(Trial {
            target: target.item.clone(),
            y_star: target.predicted.clone(),
            y_alt,
            ground_truth: target.ground_truth.clone(),
            model_correct,
            category_accuracy: self.cm.accuracy(&target.predicted)?,
            f_l: examples.as_ref().map(|e| e.f_l),
            examples,
            bin,
            bin_widened: widen,
            familiarity: None,
            condition: ConditionFlags {
                labels: LabelsCondition::Specific,
                examples: self.policy,
                map: MapCondition::None,
            },
            assets: TrialAssets::default(),
        })
    }
}

fn retryable(e: &Error) -> bool {
    matches!(
        e,
        Error::NoQualifyingCandidate { .. } | Error::TooFewItems { .. } | Error::InsufficientPool(_)
    )
}

/// Assembles a trial set: `n_correct` model-correct trials followed by
/// `n_incorrect` model-error trials, in canonical order.
#[allow(clippy::too_many_arguments)]
pub fn assemble_trialset(
    store: &FeatureStore,
    model: &PldaModel,
    cm: &ConfusionMatrix,
    predictions: &[Prediction],
    cats: &[String],
    policy: ExamplesPolicy,
    config: &AssemblyConfig,
    seed: u64,
) -> Result<TrialSet> {
    let cat_set: BTreeSet<String> = cats.iter().cloned().collect();
    let mut correct = Vec::new();
    let mut incorrect = Vec::new();
    for p in predictions {
        if !cat_set.contains(&p.ground_truth) || !cat_set.contains(&p.predicted) {
            continue;
        }
        store.index_of(&p.item)?;
        if p.ground_truth == p.predicted {
            correct.push(p);
        } else {
            incorrect.push(p);
        }
    }
    if correct.len() < config.n_correct || incorrect.len() < config.n_incorrect {
        return Err(Error::InsufficientPool(format!(
            "need {} correct and {} incorrect targets, have {} and {}",
            config.n_correct,
            config.n_incorrect,
            correct.len(),
            incorrect.len()
        )));
    }
    correct.shuffle(&mut seed::rng(seed::derive(seed, "targets/correct", 0)));
    incorrect.shuffle(&mut seed::rng(seed::derive(seed, "targets/incorrect", 0)));

    let n_total = config.n_correct + config.n_incorrect;
    let bins: Vec<Option<u8>> = match policy {
        ExamplesPolicy::Random => assign_bins(n_total, seed::derive(seed, "bins", 0))
            .into_iter()
            .map(Some)
            .collect(),
        _ => vec![None; n_total],
    };

    let ctx = Context {
        store,
        model,
        latents: teach::LatentCache::build(model, store)?,
        cm,
        cats: cat_set,
        policy,
        config,
        seed,
    };

    // Slot i draws its first target from its class pool; retries take
    // unused targets from the tail of that pool in order.
    let primary = |slot: usize| -> &Prediction {
        if slot < config.n_correct {
            correct[slot]
        } else {
            incorrect[slot - config.n_correct]
        }
    };
    let first_pass: Vec<Result<Trial>> = (0..n_total)
        .into_par_iter()
        .map(|slot| ctx.build(slot, 0, primary(slot), bins[slot], false))
        .collect();

    let mut next_spare = [config.n_correct, config.n_incorrect];
    let mut trials = Vec::with_capacity(n_total);
    for (slot, outcome) in first_pass.into_iter().enumerate() {
        let trial = match outcome {
            Ok(t) => t,
            Err(e) if retryable(&e) => {
                let class = usize::from(slot >= config.n_correct);
                let pool = if class == 0 { &correct } else { &incorrect };
                let mut found = None;
                let mut last = e;
                for attempt in 1..=config.max_retries {
                    let Some(target) = pool.get(next_spare[class]) else {
                        break;
                    };
                    next_spare[class] += 1;
                    match ctx.build(slot, attempt, target, bins[slot], false) {
                        Ok(t) => {
                            found = Some(t);
                            break;
                        }
                        Err(e) if retryable(&e) => last = e,
                        Err(e) => return Err(Error::Trial { index: slot, source: Box::new(e) }),
                    }
                }
                if found.is_none() && policy == ExamplesPolicy::Random {
                    match ctx.build(slot, 0, primary(slot), bins[slot], true) {
                        Ok(t) => found = Some(t),
                        Err(e) => last = e,
                    }
                }
                found.ok_or_else(|| Error::Trial {
                    index: slot,
                    source: Box::new(last),
                })?
            }
            Err(e) => {
                return Err(Error::Trial {
                    index: slot,
                    source: Box::new(e),
                })
            }
        };
        trials.push(trial);
    }

    Ok(TrialSet {
        trials,
        seed,
        policy,
        categories: cats.to_vec(),
    })
}

/// Familiarity ratings keyed by ordered category pair `(y_star, y_alt)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RatingTable {
    rows: BTreeMap<(String, String), [u8; N_RATERS]>,
}

impl RatingTable {
    pub fn insert(&mut self, y_star: &str, y_alt: &str, ratings: &[u8]) -> Result<()> {
        let malformed = |reason: String| Error::MalformedRating {
            y_star: y_star.to_string(),
            y_alt: y_alt.to_string(),
            reason,
        };
        let arr: [u8; N_RATERS] = ratings
            .try_into()
            .map_err(|_| malformed(format!("{} ratings, expected {N_RATERS}", ratings.len())))?;
        if arr.iter().any(|&r| r > 1) {
            return Err(malformed("ratings must be 0 or 1".into()));
        }
        self.rows.insert((y_star.to_string(), y_alt.to_string()), arr);
        Ok(())
    }

    pub fn score(&self, y_star: &str, y_alt: &str) -> Option<f64> {
        self.rows
            .get(&(y_star.to_string(), y_alt.to_string()))
            .map(|r| r.iter().map(|&v| f64::from(v)).sum::<f64>() / N_RATERS as f64)
    }

    /// Parses `y_star,y_alt,r1..r7`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut table = Self::default();
        for row in rdr.records() {
            let row = row?;
            let (y_star, y_alt) = (row.get(0).unwrap_or(""), row.get(1).unwrap_or(""));
            let ratings = row
                .iter()
                .skip(2)
                .map(|v| match v {
                    "0" => Ok(0u8),
                    "1" => Ok(1u8),
                    other => Err(Error::MalformedRating {
                        y_star: y_star.to_string(),
                        y_alt: y_alt.to_string(),
                        reason: format!("rating {other:?} is not 0 or 1"),
                    }),
                })
                .collect::<Result<Vec<_>>>()?;
            table.insert(y_star, y_alt, &ratings)?;
        }
        Ok(table)
    }

    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file)
    }
}

/// Sets each trial's familiarity to its pair's mean rating; unrated pairs stay `None`.
pub fn attach_familiarity(mut tset: TrialSet, ratings: &RatingTable) -> TrialSet {
    for t in &mut tset.trials {
        t.familiarity = ratings.score(&t.y_star, &t.y_alt);
    }
    tset
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    /// Trials without a familiarity score.
    pub missing_familiarity: Vec<usize>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every trial invariant and the set-level composition.
pub fn validate_trialset(
    tset: &TrialSet,
    store: &FeatureStore,
    cm: &ConfusionMatrix,
    config: &AssemblyConfig,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    let cats: BTreeSet<String> = tset.categories.iter().cloned().collect();
    let mut v = |i: usize, msg: String| report.violations.push(format!("trial {i}: {msg}"));
    let mut assigned = [0usize; N_BINS];
    for (i, t) in tset.trials.iter().enumerate() {
        if t.model_correct != (t.y_star == t.ground_truth) {
            v(i, "model_correct disagrees with labels".into());
        }
        if t.model_correct {
            match cm.most_confusable(&t.y_star, Some(&cats), 2) {
                Ok(top) if top.contains(&t.y_alt) => {}
                _ => v(i, format!("{} is not among the two most confusable of {}", t.y_alt, t.y_star)),
            }
        } else if t.y_alt != t.ground_truth {
            v(i, "error trial must offer the ground truth".into());
        }
        if !t.condition.is_valid() {
            v(i, "generic labels without examples".into());
        }
        match (&t.examples, tset.policy) {
            (None, ExamplesPolicy::None) => {}
            (Some(_), ExamplesPolicy::None) => v(i, "examples in a no-examples set".into()),
            (None, _) => v(i, "missing examples".into()),
            (Some(ex), policy) => {
                for (pair, cat) in [(&ex.pair_target, &t.y_star), (&ex.pair_alt, &t.y_alt)] {
                    let ok = pair.item_a != pair.item_b
                        && &pair.category == cat
                        && [&pair.item_a, &pair.item_b].iter().all(|id| {
                            store.get(id).map(|it| &it.category == cat).unwrap_or(false)
                                && **id != t.target
                        });
                    if !ok {
                        v(i, format!("example pair {}/{} not drawn from {cat}", pair.item_a, pair.item_b));
                    }
                }
                let f = ex.f_l;
                let accepted = match (policy, t.bin) {
                    (ExamplesPolicy::Helpful, _) => SelectionPolicy::Helpful.accepts(f, &config.thresholds),
                    (ExamplesPolicy::Random, Some(b)) if !t.bin_widened => {
                        SelectionPolicy::RandomBin(b).accepts(f, &config.thresholds)
                    }
                    (ExamplesPolicy::Random, Some(_)) => {
                        v(i, "bin was widened".into());
                        true
                    }
                    _ => false,
                };
                if !accepted {
                    v(i, format!("f_L {f} violates the {policy:?} policy"));
                }
            }
        }
        if let Some(b) = t.bin {
            assigned[b as usize] += 1;
        }
        if t.familiarity.is_none() {
            report.missing_familiarity.push(i);
        }
    }
    if tset.n_correct() != config.n_correct || tset.n_incorrect() != config.n_incorrect {
        report.violations.push(format!(
            "composition {}/{} != {}/{}",
            tset.n_correct(),
            tset.n_incorrect(),
            config.n_correct,
            config.n_incorrect
        ));
    }
    if tset.policy == ExamplesPolicy::Random {
        let n = tset.trials.len();
        let expected: Vec<usize> = (0..N_BINS).map(|b| n / N_BINS + usize::from(b < n % N_BINS)).collect();
        if assigned.to_vec() != expected {
            report
                .violations
                .push(format!("assigned bins {assigned:?} != {expected:?}"));
        }
    }
    report
}

/// Unique categories referenced by the trials.
pub fn categories_in_use(tset: &TrialSet) -> HashSet<String> {
    tset.trials
        .iter()
        .flat_map(|t| [t.y_star.clone(), t.y_alt.clone()])
        .collect()
}
