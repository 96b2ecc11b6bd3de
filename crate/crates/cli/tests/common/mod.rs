#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Output;

use bayesteach::featstore::{FeatureItem, FeatureStore, Split};
use bayesteach::saliency::Image;
use bayesteach::seed;
use bayesteach::trialgen::{ConditionFlags, ExamplesPolicy, LabelsCondition, MapCondition, Trial, TrialSet};
use rand::Rng;

pub const DIM: usize = 4;
pub const SIDE: usize = 8;

/// 20 categories of 10 items in 10 twin pairs, each item with an 8×8 image.
///
/// Writes the store to `<dir>/store` and images to `<dir>/images`.
pub fn write_fixture(dir: &Path) -> FeatureStore {
    let mut rng = seed::rng(11);
    let mut noise = move || rng.random_range(-1.7..1.7);
    let mut items = Vec::new();
    std::fs::create_dir_all(dir.join("images")).unwrap();
    for pair in 0..10 {
        let center: Vec<f64> = (0..DIM).map(|_| 4.0 * noise()).collect();
        let offset = 0.2 + 0.3 * pair as f64;
        for side in 0..2 {
            let c = 2 * pair + side;
            let sign = if side == 0 { -1.0 } else { 1.0 };
            for k in 0..10 {
                let id = format!("img{c:02}-{k}");
                let vector: Vec<f64> = (0..DIM)
                    .map(|i| center[i] + if i == 0 { sign * offset } else { 0.0 } + noise())
                    .collect();
                let shade = c as f32 / 20.0;
                let img = Image::filled(SIDE, SIDE, [shade, 1.0 - shade, k as f32 / 10.0]);
                let rel = PathBuf::from(format!("{id}.png"));
                img.save_png(dir.join("images").join(&rel)).unwrap();
                items.push(FeatureItem {
                    id,
                    category: format!("cat{c:02}"),
                    vector,
                    image_path: Some(rel),
                    split: Split::Train,
                });
            }
        }
    }
    let store = FeatureStore::new(DIM, items).unwrap();
    store.write(dir.join("store")).unwrap();
    store
}

/// Small pipeline config over the fixture, relative to its directory.
pub fn fixture_config() -> serde_json::Value {
    serde_json::json!({
        "paths": {
            "feature_store": "store",
            "image_root": "images",
            "output_dir": "out"
        },
        "teach": {"k": 200},
        "saliency": {
            "gp": {"width": SIDE, "height": SIDE, "length_scale": 3.0, "n_masks": 16},
            "renderers": ["blur"],
            "classifier": {"kind": "toy", "seed": 3}
        },
        "trialgen": {"n_correct": 4, "n_incorrect": 6, "pool_size": 2},
        "seed": 5
    })
}

pub fn write_config(dir: &Path, value: &serde_json::Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_vec_pretty(value).unwrap()).unwrap();
    path
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_bayesteach")
}

pub fn run(args: &[&str]) -> Output {
    std::process::Command::new(bin()).args(args).output().unwrap()
}

pub fn run_ok(args: &[&str]) -> serde_json::Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

/// Hand-built trial set: `n_correct` correct trials then `n_error` error trials
/// over categories `a*` and `b*`.
pub fn synthetic_trialset(policy: ExamplesPolicy, n_correct: usize, n_error: usize) -> TrialSet {
    let trials = (0..n_correct + n_error)
        .map(|i| {
            let correct = i < n_correct;
            let (y_star, y_alt) = (format!("a{}", i % 7), format!("b{}", i % 5));
            Trial {
                target: format!("t{i:03}"),
                ground_truth: if correct { y_star.clone() } else { y_alt.clone() },
                y_star,
                y_alt,
                model_correct: correct,
                category_accuracy: 0.5,
                examples: None,
                f_l: None,
                bin: None,
                bin_widened: false,
                familiarity: None,
                condition: ConditionFlags {
                    labels: LabelsCondition::Specific,
                    examples: policy,
                    map: MapCondition::None,
                },
                assets: Default::default(),
            }
        })
        .collect();
    TrialSet {
        trials,
        seed: 1,
        policy,
        categories: Vec::new(),
    }
}
