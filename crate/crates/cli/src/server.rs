//! Experiment HTTP API.
//!
//! Sessions and responses are appended to one NDJSON log, replayed on start.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response as HttpResponse};
use axum::routing::{get, post};
use axum::{Json, Router};
use bayesteach::metrics::{self, FidelityReport, Response};
use bayesteach::seed;
use bayesteach::trialgen::{ConditionFlags, ExamplesPolicy, LabelsCondition, MapCondition, Trial, TrialSet};
use rand::distr::weighted::WeightedIndex;
use rand::prelude::Distribution;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use crate::config::{RunConfig, WeightedCondition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Session { session_id: String, condition: ConditionFlags },
    Response(Response),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewSession {
    pub session_id: String,
    pub condition: ConditionFlags,
    pub n_trials: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseBody {
    pub session: String,
    pub trial_index: usize,
    pub choice: String,
    pub rt_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOption {
    /// Value to send back as `choice`.
    pub choice: String,
    /// Text shown on the button.
    pub label: String,
    /// Example images of this option's category.
    pub examples: Vec<String>,
}

/// A trial as shown to a participant: nothing reveals which option the model chose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlindedTrial {
    pub position: usize,
    pub trial_index: usize,
    pub options: Vec<TrialOption>,
    pub target: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionTrials {
    pub session_id: String,
    pub condition: ConditionFlags,
    pub trials: Vec<BlindedTrial>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ack {
    pub status: String,
}

struct SessionState {
    condition: ConditionFlags,
    responses: BTreeMap<usize, Response>,
}

struct Log {
    file: std::fs::File,
    sessions: HashMap<String, SessionState>,
    created: u64,
}

impl Log {
    fn append(&mut self, event: &LogEvent) -> std::io::Result<()> {
        let mut line = serde_json::to_vec(event).map_err(std::io::Error::other)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()
    }
}

pub struct AppState {
    trial_sets: HashMap<ExamplesPolicy, TrialSet>,
    conditions: Vec<WeightedCondition>,
    weights: WeightedIndex<f64>,
    seed: u64,
    assets_dir: PathBuf,
    log: Mutex<Log>,
}

fn replay(path: &Path) -> anyhow::Result<HashMap<String, SessionState>> {
    let mut sessions = HashMap::new();
    if !path.exists() {
        return Ok(sessions);
    }
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: LogEvent = serde_json::from_str(&line)
            .with_context(|| format!("corrupt response log {} line {}", path.display(), n + 1))?;
        match event {
            LogEvent::Session { session_id, condition } => {
                sessions.insert(
                    session_id,
                    SessionState {
                        condition,
                        responses: BTreeMap::new(),
                    },
                );
            }
            LogEvent::Response(r) => {
                let Some(s) = sessions.get_mut(&r.participant) else {
                    bail!("response log {} line {}: unknown session {}", path.display(), n + 1, r.participant);
                };
                s.responses.insert(r.trial_index, r);
            }
        }
    }
    Ok(sessions)
}

impl AppState {
    pub fn new(
        trial_sets: HashMap<ExamplesPolicy, TrialSet>,
        conditions: Vec<WeightedCondition>,
        seed: u64,
        assets_dir: PathBuf,
        log_path: &Path,
    ) -> anyhow::Result<Self> {
        for c in &conditions {
            if !trial_sets.contains_key(&c.flags.examples) {
                bail!("no trial set for examples policy {:?}", c.flags.examples);
            }
        }
        let weights = WeightedIndex::new(conditions.iter().map(|c| c.weight)).context("condition weights")?;
        let sessions = replay(log_path)?;
        if let Some(parent) = log_path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(log_path)
            .with_context(|| format!("opening {}", log_path.display()))?;
        Ok(Self {
            trial_sets,
            conditions,
            weights,
            seed,
            assets_dir,
            log: Mutex::new(Log {
                file,
                created: sessions.len() as u64,
                sessions,
            }),
        })
    }

    /// Loads the trial sets the configured conditions need.
    pub fn from_config(cfg: &RunConfig) -> anyhow::Result<Self> {
        let mut sets = HashMap::new();
        for c in &cfg.serve.conditions {
            let policy = c.flags.examples;
            if let std::collections::hash_map::Entry::Vacant(e) = sets.entry(policy) {
                let path = cfg.trials_path(policy);
                let ts = TrialSet::load(&path)
                    .with_context(|| format!("loading trial set {} (run `gen-trials` first)", path.display()))?;
                e.insert(ts);
            }
        }
        Self::new(
            sets,
            cfg.serve.conditions.clone(),
            cfg.seed,
            cfg.assets_dir(),
            &cfg.responses_path(),
        )
    }

    fn trial_set(&self, condition: &ConditionFlags) -> &TrialSet {
        &self.trial_sets[&condition.examples]
    }

    /// Offline report over the responses logged for `session`.
    pub async fn report(&self, session: &str) -> Option<bayesteach::Result<FidelityReport>> {
        let log = self.log.lock().await;
        let s = log.sessions.get(session)?;
        let responses: Vec<Response> = s.responses.values().cloned().collect();
        Some(metrics::fidelity_report(self.trial_set(&s.condition), &responses))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/session", get(new_session).post(new_session))
        .route("/api/trials/{session}", get(session_trials))
        .route("/api/responses", post(post_response))
        .route("/api/report/{session}", get(session_report))
        .route("/assets/{*path}", get(asset))
        .with_state(state)
}

fn error(status: StatusCode, message: impl Into<String>) -> HttpResponse {
    (status, Json(serde_json::json!({ "error": message.into() }))).into_response()
}

async fn new_session(State(state): State<Arc<AppState>>) -> HttpResponse {
    let mut log = state.log.lock().await;
    let mut rng = seed::rng(seed::derive(state.seed, "condition", log.created));
    let condition = state.conditions[state.weights.sample(&mut rng)].flags;
    let session_id = uuid::Uuid::new_v4().to_string();
    let event = LogEvent::Session {
        session_id: session_id.clone(),
        condition,
    };
    if let Err(e) = log.append(&event) {
        return error(StatusCode::INTERNAL_SERVER_ERROR, format!("writing log: {e}"));
    }
    log.created += 1;
    log.sessions.insert(
        session_id.clone(),
        SessionState {
            condition,
            responses: BTreeMap::new(),
        },
    );
    let n_trials = state.trial_set(&condition).trials.len();
    Json(NewSession {
        session_id,
        condition,
        n_trials,
    })
    .into_response()
}

fn asset_url(rel: &str) -> String {
    format!("/assets/{rel}")
}

/// Image urls for one trial under `map`: the target, the `y*` pair and the `y` pair.
fn images(trial: &Trial, map: MapCondition, with_examples: bool) -> (Option<String>, Vec<String>, Vec<String>) {
    let a = &trial.assets;
    let list: Vec<String> = match map {
        MapCondition::None => a.target.iter().chain(&a.examples).cloned().collect(),
        MapCondition::Blur => a.blur.clone(),
        MapCondition::Jet => a.jet.clone(),
    };
    let mut it = list.into_iter().map(|p| asset_url(&p));
    let target = it.next();
    if !with_examples {
        return (target, Vec::new(), Vec::new());
    }
    let star: Vec<String> = it.by_ref().take(2).collect();
    (target, star, it.collect())
}

pub fn blinded_trials(ts: &TrialSet, condition: &ConditionFlags, session: &str, seed_value: u64) -> Vec<BlindedTrial> {
    let session_seed = seed::derive(seed_value, &format!("order/{session}"), 0);
    let mut order: Vec<usize> = (0..ts.trials.len()).collect();
    order.shuffle(&mut seed::rng(session_seed));
    order
        .into_iter()
        .enumerate()
        .map(|(position, i)| {
            let trial = &ts.trials[i];
            let (target, star, alt) = images(trial, condition.map, condition.examples != ExamplesPolicy::None);
            let mut choices = [(trial.y_star.clone(), star), (trial.y_alt.clone(), alt)];
            choices.shuffle(&mut seed::rng(seed::derive(session_seed, "options", i as u64)));
            let options = choices
                .into_iter()
                .enumerate()
                .map(|(k, (choice, examples))| TrialOption {
                    label: match condition.labels {
                        LabelsCondition::Specific => choice.clone(),
                        LabelsCondition::Generic => format!("Category {}", ["A", "B"][k]),
                    },
                    choice,
                    examples,
                })
                .collect();
            BlindedTrial {
                position,
                trial_index: i,
                options,
                target,
            }
        })
        .collect()
}

async fn session_trials(State(state): State<Arc<AppState>>, UrlPath(session): UrlPath<String>) -> HttpResponse {
    let condition = {
        let log = state.log.lock().await;
        match log.sessions.get(&session) {
            Some(s) => s.condition,
            None => return error(StatusCode::NOT_FOUND, format!("unknown session {session}")),
        }
    };
    let trials = blinded_trials(state.trial_set(&condition), &condition, &session, state.seed);
    Json(SessionTrials {
        session_id: session,
        condition,
        trials,
    })
    .into_response()
}

async fn post_response(State(state): State<Arc<AppState>>, Json(body): Json<ResponseBody>) -> HttpResponse {
    let mut log = state.log.lock().await;
    let Some(s) = log.sessions.get(&body.session) else {
        return error(StatusCode::NOT_FOUND, format!("unknown session {}", body.session));
    };
    let ts = state.trial_set(&s.condition);
    let Some(trial) = ts.trials.get(body.trial_index) else {
        return error(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("trial index {} out of range (0..{})", body.trial_index, ts.trials.len()),
        );
    };
    if body.choice != trial.y_star && body.choice != trial.y_alt {
        return error(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("choice {:?} is not an option of trial {}", body.choice, body.trial_index),
        );
    }
    let response = Response {
        participant: body.session.clone(),
        trial_index: body.trial_index,
        choice: body.choice,
        rt_ms: body.rt_ms,
    };
    if let Some(prev) = s.responses.get(&body.trial_index) {
        return if *prev == response {
            Json(Ack {
                status: "duplicate".into(),
            })
            .into_response()
        } else {
            error(
                StatusCode::CONFLICT,
                format!("trial {} already answered in session {}", body.trial_index, body.session),
            )
        };
    }
    if let Err(e) = log.append(&LogEvent::Response(response.clone())) {
        return error(StatusCode::INTERNAL_SERVER_ERROR, format!("writing log: {e}"));
    }
    log.sessions
        .get_mut(&body.session)
        .expect("session checked above")
        .responses
        .insert(body.trial_index, response);
    (StatusCode::CREATED, Json(Ack { status: "recorded".into() })).into_response()
}

async fn session_report(State(state): State<Arc<AppState>>, UrlPath(session): UrlPath<String>) -> HttpResponse {
    match state.report(&session).await {
        None => error(StatusCode::NOT_FOUND, format!("unknown session {session}")),
        Some(Err(e)) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        Some(Ok(report)) => Json(report).into_response(),
    }
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("json") => "application/json",
        _ => "application/octet-stream",
    }
}

async fn asset(State(state): State<Arc<AppState>>, UrlPath(path): UrlPath<String>) -> HttpResponse {
    let rel = Path::new(&path);
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return error(StatusCode::BAD_REQUEST, "invalid asset path");
    }
    let full = state.assets_dir.join(rel);
    match tokio::fs::read(&full).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&full))], bytes).into_response(),
        Err(_) => error(StatusCode::NOT_FOUND, format!("no asset {path}")),
    }
}

/// Binds `port` on all interfaces and serves until interrupted.
pub async fn serve(state: AppState, port: u16) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port))
        .await
        .with_context(|| format!("binding port {port}"))?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .context("serving")
}
