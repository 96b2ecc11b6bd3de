//! Classifier adapter protocol.
//!
//! Newline-delimited JSON, one request per line:
//!
//! ```text
//! {"id": "...", "labels": ["..."], "image": {"w": W, "h": H, "data_b64": "..."}}
//! ```
//!
//! `data_b64` is base64 of the raw interleaved RGB float32 little-endian
//! pixels. A reply is `{"id": "...", "probs": [...]}` (one probability per
//! requested label) or `{"id": "...", "error": "..."}`.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::classifier::MaskedClassifier;
use super::image::Image;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireImage {
    pub w: usize,
    pub h: usize,
    pub data_b64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyRequest {
    pub id: String,
    pub labels: Vec<String>,
    pub image: WireImage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restrict: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl WireImage {
    pub fn encode(image: &Image) -> Self {
        let raw: Vec<u8> = image.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self {
            w: image.width,
            h: image.height,
            data_b64: STANDARD.encode(raw),
        }
    }

    pub fn decode(&self) -> Result<Image> {
        let raw = STANDARD
            .decode(&self.data_b64)
            .map_err(|e| Error::Protocol(format!("bad base64: {e}")))?;
        if raw.len() != self.w * self.h * 12 {
            return Err(Error::Protocol(format!(
                "image payload has {} bytes, expected {}",
                raw.len(),
                self.w * self.h * 12
            )));
        }
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Image::new(self.w, self.h, data)
    }
}

impl ClassifyResponse {
    /// Probabilities for a reply to `request`, validated against it.
    pub fn into_probs(self, request: &ClassifyRequest) -> Result<Vec<f64>> {
        if self.id != request.id {
            return Err(Error::Protocol(format!(
                "response id {} does not match request {}",
                self.id, request.id
            )));
        }
        if let Some(err) = self.error {
            return Err(Error::Protocol(format!("classifier error for {}: {err}", self.id)));
        }
        let probs = self
            .probs
            .ok_or_else(|| Error::Protocol(format!("response {} carries no probs", self.id)))?;
        if probs.len() != request.labels.len()
            || probs.iter().any(|p| !p.is_finite() || !(0.0..=1.0).contains(p))
        {
            return Err(Error::Protocol(format!(
                "response {} has invalid probs {probs:?}",
                self.id
            )));
        }
        Ok(probs)
    }
}

/// Answers one request line with `classifier`.
pub fn handle_line<C: MaskedClassifier + ?Sized>(classifier: &C, line: &str) -> ClassifyResponse {
    let request: ClassifyRequest = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => {
            let id = serde_json::from_str::<serde_json::Value>(line)
                .ok()
                .and_then(|v| v.get("id").and_then(|i| i.as_str()).map(str::to_string))
                .unwrap_or_default();
            return ClassifyResponse {
                id,
                probs: None,
                error: Some(format!("malformed request: {e}")),
            };
        }
    };
    let result = request
        .image
        .decode()
        .and_then(|img| classifier.classify(&img, &request.labels));
    match result {
        Ok(probs) => ClassifyResponse {
            id: request.id,
            probs: Some(probs),
            error: None,
        },
        Err(e) => ClassifyResponse {
            id: request.id,
            probs: None,
            error: Some(e.to_string()),
        },
    }
}

/// Serves `classifier` over newline-delimited JSON until `input` is exhausted.
pub fn serve<C, R, W>(classifier: &C, input: R, output: W) -> std::io::Result<()>
where
    C: MaskedClassifier + ?Sized,
    R: BufRead,
    W: Write,
{
    let mut out = BufWriter::new(output);
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = handle_line(classifier, &line);
        serde_json::to_writer(&mut out, &reply)?;
        out.write_all(b"\n")?;
        out.flush()?;
    }
    Ok(())
}

/// Builds protocol requests with sequential ids.
#[derive(Debug, Default)]
pub struct RequestIds(AtomicU64);

impl RequestIds {
    pub fn request(&self, image: &Image, labels: &[String]) -> ClassifyRequest {
        let n = self.0.fetch_add(1, Ordering::Relaxed);
        ClassifyRequest {
            id: format!("r{n}"),
            labels: labels.to_vec(),
            image: WireImage::encode(image),
            restrict: None,
        }
    }
}

struct Pipe {
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// Classifier backed by a child process speaking the protocol on stdin/stdout.
pub struct StdioClassifier {
    child: Mutex<Child>,
    pipe: Mutex<Pipe>,
    ids: RequestIds,
}

impl StdioClassifier {
    pub fn spawn(mut command: Command) -> Result<Self> {
        let mut child = command
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Protocol(format!("failed to start classifier: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            child: Mutex::new(child),
            pipe: Mutex::new(Pipe { stdin, stdout }),
            ids: RequestIds::default(),
        })
    }

    fn round_trip(&self, request: &ClassifyRequest) -> Result<ClassifyResponse> {
        let mut line = serde_json::to_string(request)
            .map_err(|e| Error::Protocol(e.to_string()))?;
        line.push('\n');
        let mut pipe = self.pipe.lock().expect("classifier pipe poisoned");
        let io = |e: std::io::Error| Error::Protocol(format!("classifier pipe: {e}"));
        pipe.stdin.write_all(line.as_bytes()).map_err(io)?;
        pipe.stdin.flush().map_err(io)?;
        let mut reply = String::new();
        if pipe.stdout.read_line(&mut reply).map_err(io)? == 0 {
            return Err(Error::Protocol("classifier closed its output".into()));
        }
        serde_json::from_str(&reply).map_err(|e| Error::Protocol(format!("bad response: {e}")))
    }
}

impl MaskedClassifier for StdioClassifier {
    fn classify(&self, image: &Image, labels: &[String]) -> Result<Vec<f64>> {
        let request = self.ids.request(image, labels);
        self.round_trip(&request)?.into_probs(&request)
    }
}

impl Drop for StdioClassifier {
    fn drop(&mut self) {
        if let Ok(mut child) = self.child.lock() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
