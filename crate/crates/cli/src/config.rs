//! Run configuration, read from a single JSON document.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bayesteach::saliency::GpMaskConfig;
use bayesteach::teach::{SelectionPolicy, Thresholds, DEFAULT_K};
use bayesteach::trialgen::{ConditionFlags, ExamplesPolicy, MapCondition, MAX_RETRIES};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Feature store directory, or a CSV fixture.
    pub feature_store: PathBuf,
    /// Root that item `image_path`s are relative to.
    #[serde(default)]
    pub image_root: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// `id,ground_truth,predicted` rows; PLDA predictions are used when absent.
    #[serde(default)]
    pub predictions: Option<PathBuf>,
    /// `y_star,y_alt,r1..r7` rows.
    #[serde(default)]
    pub familiarity: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PldaSection {
    #[serde(default)]
    pub q: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeachSection {
    pub k: usize,
    /// Default policy for `select`.
    pub policy: SelectionPolicy,
    pub thresholds: Thresholds,
}

impl Default for TeachSection {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            policy: SelectionPolicy::Helpful,
            thresholds: Thresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassifierConfig {
    /// In-process toy classifier over all store categories.
    Toy { seed: u64 },
    /// Child process speaking the line protocol on stdin/stdout.
    Stdio { command: Vec<String> },
    /// Bridge reachable at `url`, one POST per request.
    Http { url: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaliencySection {
    pub gp: GpMaskConfig,
    /// Map renderings produced by `gen-trials`.
    pub renderers: Vec<MapCondition>,
    pub jet_alpha: f64,
    pub classifier: ClassifierConfig,
}

impl Default for SaliencySection {
    fn default() -> Self {
        Self {
            gp: GpMaskConfig::default(),
            renderers: vec![MapCondition::Blur, MapCondition::Jet],
            jet_alpha: bayesteach::saliency::render::DEFAULT_JET_ALPHA,
            classifier: ClassifierConfig::Toy { seed: 0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialgenSection {
    pub n_correct: usize,
    pub n_incorrect: usize,
    /// Categories drawn from each of the four confusion subsets.
    pub pool_size: usize,
    pub max_retries: usize,
    /// Example policies to build trial sets for.
    pub policies: Vec<ExamplesPolicy>,
}

impl Default for TrialgenSection {
    fn default() -> Self {
        Self {
            n_correct: 50,
            n_incorrect: 100,
            pool_size: 25,
            max_retries: MAX_RETRIES,
            policies: vec![ExamplesPolicy::None, ExamplesPolicy::Helpful, ExamplesPolicy::Random],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedCondition {
    #[serde(flatten)]
    pub flags: ConditionFlags,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub port: u16,
    pub conditions: Vec<WeightedCondition>,
    /// Append-only response log; defaults to `<output_dir>/responses.ndjson`.
    pub responses_file: Option<PathBuf>,
}

impl Default for ServeSection {
    fn default() -> Self {
        Self {
            port: 8080,
            conditions: ConditionFlags::all()
                .into_iter()
                .map(|flags| WeightedCondition { flags, weight: 1.0 })
                .collect(),
            responses_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    #[serde(default)]
    pub plda: PldaSection,
    #[serde(default)]
    pub teach: TeachSection,
    #[serde(default)]
    pub saliency: SaliencySection,
    #[serde(default)]
    pub trialgen: TrialgenSection,
    #[serde(default)]
    pub serve: ServeSection,
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        config.resolve_relative_to(path.parent().unwrap_or(Path::new(".")));
        config.validate()?;
        Ok(config)
    }

    /// Makes relative paths relative to the config file's directory.
    fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.feature_store);
        fix(&mut self.paths.output_dir);
        for p in [
            &mut self.paths.image_root,
            &mut self.paths.predictions,
            &mut self.paths.familiarity,
            &mut self.serve.responses_file,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let th = &self.teach.thresholds;
        for (name, v) in [("helpful", th.helpful), ("unhelpful", th.unhelpful)] {
            if !(v > 0.0 && v < 1.0) {
                bail!("teach.thresholds.{name} = {v} must lie in (0, 1)");
            }
        }
        match self.teach.policy {
            SelectionPolicy::RandomBin(b) if b as usize >= bayesteach::teach::N_BINS => {
                bail!("teach.policy bin {b} out of range")
            }
            SelectionPolicy::Interval { lo, hi } if !(lo < hi) => bail!("teach.policy interval is empty"),
            _ => {}
        }
        if self.teach.k == 0 {
            bail!("teach.k must be at least 1");
        }
        if !self.paths.feature_store.exists() {
            bail!("feature store {} does not exist", self.paths.feature_store.display());
        }
        for (name, p) in [
            ("image_root", &self.paths.image_root),
            ("predictions", &self.paths.predictions),
            ("familiarity", &self.paths.familiarity),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    bail!("paths.{name} {} does not exist", p.display());
                }
            }
        }
        self.saliency.gp.validate()?;
        if !(0.0..=1.0).contains(&self.saliency.jet_alpha) {
            bail!("saliency.jet_alpha must lie in [0, 1]");
        }
        if self.trialgen.pool_size == 0 {
            bail!("trialgen.pool_size must be at least 1");
        }
        if self.serve.conditions.is_empty() {
            bail!("serve.conditions is empty");
        }
        for c in &self.serve.conditions {
            if !c.flags.is_valid() {
                bail!("condition {:?} pairs generic labels with no examples, which is not run", c.flags);
            }
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                bail!("condition {:?} has non-positive weight {}", c.flags, c.weight);
            }
        }
        Ok(())
    }

    pub fn model_path(&self) -> PathBuf {
        self.paths.output_dir.join("model.json")
    }

    pub fn trials_path(&self, policy: ExamplesPolicy) -> PathBuf {
        self.paths
            .output_dir
            .join("trials")
            .join(format!("{}.json", policy_name(policy)))
    }

    pub fn assets_dir(&self) -> PathBuf {
        self.paths.output_dir.join("assets")
    }

    pub fn responses_path(&self) -> PathBuf {
        self.serve
            .responses_file
            .clone()
            .unwrap_or_else(|| self.paths.output_dir.join("responses.ndjson"))
    }
}

pub fn policy_name(policy: ExamplesPolicy) -> &'static str {
    match policy {
        ExamplesPolicy::None => "none",
        ExamplesPolicy::Helpful => "helpful",
        ExamplesPolicy::Random => "random",
    }
}
