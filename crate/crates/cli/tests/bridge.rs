mod common;

use std::process::Command;

use axum::routing::post;
use axum::{Json, Router};
use bayesteach::saliency::protocol::{handle_line, ClassifyRequest, ClassifyResponse, StdioClassifier};
use bayesteach::saliency::{expected_saliency_streaming, GpMaskConfig, GridGpSampler, Image, LinearToyClassifier, MaskedClassifier};
use bayesteach_cli::classifier::{self, HttpClassifier};
use bayesteach_cli::config::ClassifierConfig;

fn labels() -> Vec<String> {
    ["cat", "dog", "fox"].map(String::from).to_vec()
}

fn probe(k: usize) -> Image {
    let data = (0..6 * 5 * 3).map(|i| ((i * 7 + k * 13) % 17) as f32 / 16.0).collect();
    Image::new(6, 5, data).unwrap()
}

#[test]
fn toy_bridge_over_stdio_matches_in_process() {
    let mut cmd = Command::new(common::bin());
    cmd.args(["toy-bridge", "--width", "6", "--height", "5", "--labels", "cat,dog,fox", "--seed", "4"]);
    let remote = StdioClassifier::spawn(cmd).unwrap();
    let local = LinearToyClassifier::seeded(6, 5, labels(), 4);
    for k in 0..5 {
        let img = probe(k);
        assert_eq!(remote.classify(&img, &labels()).unwrap(), local.classify(&img, &labels()).unwrap());
    }
    let err = remote.classify(&probe(0), &["owl".to_string()]).unwrap_err();
    assert!(err.to_string().contains("owl"), "{err}");
}

#[test]
fn stdio_config_builds_a_working_classifier() {
    let cfg = ClassifierConfig::Stdio {
        command: vec![
            common::bin().to_string(),
            "toy-bridge".into(),
            "--width=6".into(),
            "--height=5".into(),
            "--labels=cat,dog,fox".into(),
            "--seed=1".into(),
        ],
    };
    let clf = classifier::build(&cfg, 6, 5, labels()).unwrap();
    let p = clf.classify(&probe(1), &labels()).unwrap();
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let empty = ClassifierConfig::Stdio { command: vec![] };
    assert!(classifier::build(&empty, 6, 5, labels()).is_err());
}

/// Serves the toy classifier at `/classify` on an ephemeral port.
fn spawn_http_bridge(seed: u64) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let toy = LinearToyClassifier::seeded(6, 5, labels(), seed);
            let app = Router::new().route(
                "/classify",
                post(move |Json(req): Json<ClassifyRequest>| async move {
                    Json::<ClassifyResponse>(handle_line(&toy, &serde_json::to_string(&req).unwrap()))
                }),
            );
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    format!("http://{}/classify", rx.recv().unwrap())
}

#[test]
fn http_bridge_matches_in_process() {
    let url = spawn_http_bridge(6);
    let remote = HttpClassifier::new(url.clone()).unwrap();
    let local = LinearToyClassifier::seeded(6, 5, labels(), 6);
    for k in 0..3 {
        let img = probe(k);
        assert_eq!(remote.classify(&img, &labels()).unwrap(), local.classify(&img, &labels()).unwrap());
    }

    // Saliency through the bridge equals the in-process estimate.
    let gp = GpMaskConfig {
        width: 6,
        height: 5,
        length_scale: 2.0,
        n_masks: 12,
        ..GpMaskConfig::default()
    };
    let sampler = GridGpSampler::new(gp).unwrap();
    let clf = classifier::build(&ClassifierConfig::Http { url }, 6, 5, labels()).unwrap();
    let a = expected_saliency_streaming(&clf, &probe(2), "dog", &sampler, 8).unwrap();
    let b = expected_saliency_streaming(&local, &probe(2), "dog", &sampler, 8).unwrap();
    assert_eq!(a, b);
}

#[test]
fn http_bridge_unreachable_is_an_error() {
    let remote = HttpClassifier::new("http://127.0.0.1:9/classify").unwrap();
    assert!(remote.classify(&probe(0), &labels()).is_err());
}
