//! Classifier backends selected by the run configuration.

use std::process::Command;

use anyhow::{bail, Context, Result};
use bayesteach::saliency::protocol::{ClassifyResponse, RequestIds, StdioClassifier};
use bayesteach::saliency::{Image, LinearToyClassifier, MaskedClassifier};
use bayesteach::Error;

use crate::config::ClassifierConfig;

/// Bridge reached over HTTP: each request is POSTed as JSON to `url`.
pub struct HttpClassifier {
    url: String,
    client: reqwest::blocking::Client,
    ids: RequestIds,
}

impl HttpClassifier {
    pub fn new(url: impl Into<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .context("building HTTP client")?;
        Ok(Self {
            url: url.into(),
            client,
            ids: RequestIds::default(),
        })
    }
}

impl MaskedClassifier for HttpClassifier {
    fn classify(&self, image: &Image, labels: &[String]) -> bayesteach::Result<Vec<f64>> {
        let request = self.ids.request(image, labels);
        let reply: ClassifyResponse = self
            .client
            .post(&self.url)
            .json(&request)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| Error::Protocol(format!("POST {}: {e}", self.url)))?;
        reply.into_probs(&request)
    }
}

/// Instantiates the configured classifier for images of `width × height`.
pub fn build(
    config: &ClassifierConfig,
    width: usize,
    height: usize,
    labels: Vec<String>,
) -> Result<Box<dyn MaskedClassifier>> {
    Ok(match config {
        ClassifierConfig::Toy { seed } => Box::new(LinearToyClassifier::seeded(width, height, labels, *seed)),
        ClassifierConfig::Stdio { command } => {
            let Some((program, args)) = command.split_first() else {
                bail!("stdio classifier command is empty");
            };
            let mut cmd = Command::new(program);
            cmd.args(args);
            Box::new(StdioClassifier::spawn(cmd)?)
        }
        ClassifierConfig::Http { url } => Box::new(HttpClassifier::new(url.clone())?),
    })
}
