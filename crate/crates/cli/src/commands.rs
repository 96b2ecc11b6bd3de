//! Pipeline commands.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bayesteach::featstore::FeatureStore;
use bayesteach::metrics::{self, BootstrapMethod, FidelityReport, IdealizedProfiles, Response};
use bayesteach::plda::{default_q, fit_plda, ClassIndex, PldaModel};
use bayesteach::saliency::render::{render_blur, render_jet};
use bayesteach::saliency::{expected_saliency_streaming, GridGpSampler, Image, MaskedClassifier, SaliencyMap};
use bayesteach::seed;
use bayesteach::teach::{self, SelectionPolicy, TeachingCandidate};
use bayesteach::trialgen::{
    self, AssemblyConfig, ExamplesPolicy, MapCondition, Prediction, RatingTable, Trial, TrialAssets, TrialSet,
};
use serde::Serialize;

use crate::classifier;
use crate::config::{policy_name, RunConfig};

/// Loads a feature store directory or a `.csv` fixture.
pub fn load_store(path: &Path) -> Result<FeatureStore> {
    let store = if path.extension().is_some_and(|e| e == "csv") {
        FeatureStore::from_csv(path)
    } else {
        FeatureStore::load(path)
    };
    store.with_context(|| format!("loading feature store {}", path.display()))
}

fn load_model(cfg: &RunConfig) -> Result<PldaModel> {
    let path = cfg.model_path();
    PldaModel::load(&path).with_context(|| format!("loading model {} (run `fit` first)", path.display()))
}

#[derive(Debug, Serialize)]
pub struct FitSummary {
    pub model: PathBuf,
    pub q: usize,
    pub psi_max: f64,
    pub psi_min: f64,
    pub n_per_class: f64,
}

pub fn fit(cfg: &RunConfig) -> Result<FitSummary> {
    let store = load_store(&cfg.paths.feature_store)?;
    let q = cfg.plda.q.unwrap_or_else(|| default_q(&store));
    let model = fit_plda(&store, q)?;
    std::fs::create_dir_all(&cfg.paths.output_dir)
        .with_context(|| format!("creating {}", cfg.paths.output_dir.display()))?;
    let path = cfg.model_path();
    model.save(&path)?;
    Ok(FitSummary {
        model: path,
        q: model.q(),
        psi_max: model.psi().iter().copied().fold(f64::NEG_INFINITY, f64::max),
        psi_min: model.psi().iter().copied().fold(f64::INFINITY, f64::min),
        n_per_class: model.n_per_class(),
    })
}

/// Model predictions: from the configured CSV, or from the PLDA class index.
pub fn predictions(cfg: &RunConfig, store: &FeatureStore, model: &PldaModel) -> Result<Vec<Prediction>> {
    if let Some(path) = &cfg.paths.predictions {
        return trialgen::read_predictions(path).with_context(|| format!("reading {}", path.display()));
    }
    let index = ClassIndex::build(model, store)?;
    store
        .items()
        .iter()
        .map(|it| {
            Ok(Prediction {
                item: it.id.clone(),
                ground_truth: it.category.clone(),
                predicted: index.predict(model, &it.vector)?,
            })
        })
        .collect()
}

fn assembly_config(cfg: &RunConfig) -> AssemblyConfig {
    AssemblyConfig {
        n_correct: cfg.trialgen.n_correct,
        n_incorrect: cfg.trialgen.n_incorrect,
        k: cfg.teach.k,
        thresholds: cfg.teach.thresholds,
        max_retries: cfg.trialgen.max_retries,
    }
}

#[derive(Debug, Serialize)]
pub struct GenSummary {
    pub categories: usize,
    pub trial_sets: Vec<PathBuf>,
    pub assets_written: usize,
}

pub fn gen_trials(cfg: &RunConfig) -> Result<GenSummary> {
    let store = load_store(&cfg.paths.feature_store)?;
    let model = load_model(cfg)?;
    let preds = predictions(cfg, &store, &model)?;
    let all: Vec<String> = store.category_ids().map(String::from).collect();
    let cm = trialgen::confusion_matrix(&preds, &all)?;
    let cats = trialgen::select_categories(&cm, cfg.trialgen.pool_size, seed::derive(cfg.seed, "categories", 0))?;
    let ratings = match &cfg.paths.familiarity {
        Some(p) => Some(RatingTable::from_csv(p)?),
        None => None,
    };
    let assembly = assembly_config(cfg);

    let mut renderer = match &cfg.paths.image_root {
        Some(root) => {
            let gp = &cfg.saliency.gp;
            Some(AssetRenderer {
                cfg,
                store: &store,
                root: root.clone(),
                sampler: GridGpSampler::new(gp.clone())?,
                classifier: classifier::build(&cfg.saliency.classifier, gp.width, gp.height, all.clone())?,
                maps: HashMap::new(),
                written: 0,
            })
        }
        None => None,
    };

    let mut written = Vec::new();
    for &policy in &cfg.trialgen.policies {
        let name = policy_name(policy);
        let mut ts = trialgen::assemble_trialset(
            &store,
            &model,
            &cm,
            &preds,
            &cats,
            policy,
            &assembly,
            seed::derive(cfg.seed, &format!("trials/{name}"), 0),
        )
        .with_context(|| format!("assembling the {name} trial set"))?;
        if let Some(r) = &ratings {
            ts = trialgen::attach_familiarity(ts, r);
        }
        if let Some(r) = renderer.as_mut() {
            for (i, trial) in ts.trials.iter_mut().enumerate() {
                trial.assets = r
                    .render_trial(policy, i, trial)
                    .with_context(|| format!("rendering assets for {name} trial {i}"))?;
            }
        }
        let path = cfg.trials_path(policy);
        std::fs::create_dir_all(path.parent().expect("trials dir"))?;
        ts.save(&path)?;
        written.push(path);
    }
    Ok(GenSummary {
        categories: cats.len(),
        trial_sets: written,
        assets_written: renderer.map_or(0, |r| r.written),
    })
}

struct AssetRenderer<'a> {
    cfg: &'a RunConfig,
    store: &'a FeatureStore,
    root: PathBuf,
    sampler: GridGpSampler,
    classifier: Box<dyn MaskedClassifier>,
    maps: HashMap<(String, String), SaliencyMap>,
    written: usize,
}

impl AssetRenderer<'_> {
    fn image(&self, id: &str) -> Result<Image> {
        let item = self.store.get(id)?;
        let Some(rel) = &item.image_path else {
            bail!("item {id} has no image_path");
        };
        let gp = self.sampler.config();
        Ok(Image::load(self.root.join(rel))?.resize(gp.width, gp.height))
    }

    fn map(&mut self, id: &str, label: &str, image: &Image) -> Result<&SaliencyMap> {
        let key = (id.to_string(), label.to_string());
        if !self.maps.contains_key(&key) {
            let map_seed = seed::derive(self.cfg.seed, &format!("map/{id}/{label}"), 0);
            let map = expected_saliency_streaming(&self.classifier, image, label, &self.sampler, map_seed)?;
            let stem = self.cfg.assets_dir().join("maps").join(format!("{id}__{label}"));
            std::fs::create_dir_all(stem.parent().expect("maps dir"))?;
            map.export(&stem)?;
            self.maps.insert(key.clone(), map);
        }
        Ok(&self.maps[&key])
    }

    /// Writes the images for one trial and returns their paths relative to the asset root.
    fn render_trial(&mut self, policy: ExamplesPolicy, index: usize, trial: &Trial) -> Result<TrialAssets> {
        let rel_dir = PathBuf::from(policy_name(policy)).join(format!("{index:03}"));
        let dir = self.cfg.assets_dir().join(&rel_dir);
        std::fs::create_dir_all(&dir)?;
        let mut shown = vec![("target".to_string(), trial.target.clone(), trial.y_star.clone())];
        if let Some(ex) = &trial.examples {
            for (slot, pair) in [("star", &ex.pair_target), ("alt", &ex.pair_alt)] {
                shown.push((format!("ex_{slot}_a"), pair.item_a.clone(), pair.category.clone()));
                shown.push((format!("ex_{slot}_b"), pair.item_b.clone(), pair.category.clone()));
            }
        }
        let rel = |name: String| rel_dir.join(name).to_string_lossy().replace('\\', "/");
        let mut assets = TrialAssets::default();
        for (k, (name, id, label)) in shown.into_iter().enumerate() {
            let image = self.image(&id)?;
            let file = format!("{name}.png");
            image.save_png(dir.join(&file))?;
            self.written += 1;
            if k == 0 {
                assets.target = Some(rel(file));
            } else {
                assets.examples.push(rel(file));
            }
            if self.cfg.saliency.renderers.iter().all(|r| *r == MapCondition::None) {
                continue;
            }
            let alpha = self.cfg.saliency.jet_alpha;
            let map = self.map(&id, &label, &image)?.clone();
            assets.maps.push(format!("maps/{id}__{label}.png"));
            for renderer in &self.cfg.saliency.renderers {
                let (suffix, out, list) = match renderer {
                    MapCondition::None => continue,
                    MapCondition::Blur => ("blur", render_blur(&image, &map)?, &mut assets.blur),
                    MapCondition::Jet => ("jet", render_jet(&image, &map, alpha)?, &mut assets.jet),
                };
                let file = format!("{name}.{suffix}.png");
                out.save_png(dir.join(&file))?;
                self.written += 1;
                list.push(rel(file));
            }
        }
        Ok(assets)
    }
}

#[derive(Debug, Serialize)]
pub struct SaliencySummary {
    pub label: String,
    pub map: PathBuf,
    pub renders: Vec<PathBuf>,
    pub min: f64,
    pub max: f64,
}

/// One-off expected saliency map for `image` and `label`.
pub fn saliency(cfg: &RunConfig, image: &Path, label: &str, out_stem: &Path) -> Result<SaliencySummary> {
    let gp = &cfg.saliency.gp;
    let img = Image::load(image)?.resize(gp.width, gp.height);
    let labels = match &cfg.saliency.classifier {
        crate::config::ClassifierConfig::Toy { .. } => {
            load_store(&cfg.paths.feature_store)?.category_ids().map(String::from).collect()
        }
        _ => vec![label.to_string()],
    };
    let clf = classifier::build(&cfg.saliency.classifier, gp.width, gp.height, labels)?;
    let sampler = GridGpSampler::new(gp.clone())?;
    let map = expected_saliency_streaming(&clf, &img, label, &sampler, seed::derive(cfg.seed, "saliency", 0))?;
    if let Some(parent) = out_stem.parent() {
        std::fs::create_dir_all(parent)?;
    }
    map.export(out_stem)?;
    let mut renders = Vec::new();
    for r in &cfg.saliency.renderers {
        let (suffix, out) = match r {
            MapCondition::None => continue,
            MapCondition::Blur => ("blur", render_blur(&img, &map)?),
            MapCondition::Jet => ("jet", render_jet(&img, &map, cfg.saliency.jet_alpha)?),
        };
        let path = PathBuf::from(format!("{}.{suffix}.png", out_stem.display()));
        out.save_png(&path)?;
        renders.push(path);
    }
    Ok(SaliencySummary {
        label: label.to_string(),
        map: out_stem.with_extension("png"),
        renders,
        min: map.values.iter().copied().fold(f64::INFINITY, f64::min),
        max: map.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Parses `helpful`, `unhelpful`, `bin:N` or `interval:LO:HI`.
pub fn parse_policy(text: &str) -> Result<SelectionPolicy> {
    let parts: Vec<&str> = text.split(':').collect();
    Ok(match parts.as_slice() {
        ["helpful"] => SelectionPolicy::Helpful,
        ["unhelpful"] => SelectionPolicy::Unhelpful,
        ["bin", b] => {
            let b: u8 = b.parse().context("bin index")?;
            if b as usize >= teach::N_BINS {
                bail!("bin {b} out of range");
            }
            SelectionPolicy::RandomBin(b)
        }
        ["interval", lo, hi] => SelectionPolicy::Interval {
            lo: lo.parse().context("interval low")?,
            hi: hi.parse().context("interval high")?,
        },
        _ => bail!("unknown policy {text:?}; use helpful, unhelpful, bin:N or interval:LO:HI"),
    })
}

#[derive(Debug, Serialize)]
pub struct SelectSummary {
    #[serde(flatten)]
    pub candidate: TeachingCandidate,
    #[serde(rename = "P_T")]
    pub p_t: f64,
}

/// Picks examples for one target; `scores_out` receives the scored candidate space.
pub fn select(
    cfg: &RunConfig,
    target: &str,
    y_star: &str,
    y_alt: &str,
    policy: Option<SelectionPolicy>,
    scores_out: Option<&Path>,
) -> Result<SelectSummary> {
    let store = load_store(&cfg.paths.feature_store)?;
    let model = load_model(cfg)?;
    let seed_value = seed::derive(cfg.seed, &format!("select/{target}"), 0);
    let scores = teach::score_candidate_space(&model, &store, target, y_star, y_alt, cfg.teach.k, seed_value)?;
    if let Some(path) = scores_out {
        std::fs::write(path, serde_json::to_vec(&scores)?).with_context(|| format!("writing {}", path.display()))?;
    }
    let policy = policy.unwrap_or(cfg.teach.policy);
    let candidate = teach::select_examples_with(&scores, policy, &cfg.teach.thresholds, seed::derive(seed_value, "pick", 0))?;
    Ok(SelectSummary {
        p_t: candidate.posterior,
        candidate,
    })
}

#[derive(Debug, Serialize)]
pub struct MetricsSummary {
    pub report: FidelityReport,
    pub profiles: IdealizedProfiles,
    pub included: Vec<String>,
    pub excluded: Vec<String>,
}

pub fn metrics(
    trials: &Path,
    responses: &Path,
    n_resamples: usize,
    seed_value: u64,
    method: BootstrapMethod,
) -> Result<MetricsSummary> {
    let ts = TrialSet::load(trials)?;
    let all = metrics::read_responses_file(responses)?;
    let sessions = metrics::sessions_from_responses(&all);
    let included = metrics::exclusion_filter(&sessions)?;
    let excluded = sessions
        .iter()
        .map(|s| s.participant.clone())
        .filter(|p| !included.contains(p))
        .collect();
    let kept: Vec<Response> = all.into_iter().filter(|r| included.contains(&r.participant)).collect();
    if kept.is_empty() {
        bail!("no responses left after exclusion");
    }
    let report = metrics::fidelity_report_with_ci(&ts, &kept, n_resamples, seed_value, method)?;
    Ok(MetricsSummary {
        report,
        profiles: metrics::idealized_profiles(&ts),
        included,
        excluded,
    })
}
