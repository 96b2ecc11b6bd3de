//! Scoring participant responses against the model's judgements.
//!
//! A response agrees with the model when the participant picks `y_star`.
//! Sensitivity is agreement on trials the model got right, specificity is
//! agreement on trials it got wrong, and fidelity is agreement overall.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::trialgen::TrialSet;
use crate::{seed, Error, Result};

pub const DEFAULT_RESAMPLES: usize = 10_000;
/// Minimum mean time per trial for a session to be kept.
pub const MIN_MS_PER_TRIAL: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub participant: String,
    pub trial_index: usize,
    pub choice: String,
    pub rt_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportCi {
    pub fidelity: Option<Interval>,
    pub sensitivity: Option<Interval>,
    pub specificity: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub fidelity: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    /// Responses on model-correct trials.
    pub n_correct_trials: usize,
    /// Responses on model-error trials.
    pub n_error_trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<ReportCi>,
}

fn ratio(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

impl FidelityReport {
    fn from_counts(correct_hits: usize, n_correct: usize, error_hits: usize, n_error: usize) -> Self {
        Self {
            fidelity: ratio(correct_hits + error_hits, n_correct + n_error),
            sensitivity: ratio(correct_hits, n_correct),
            specificity: ratio(error_hits, n_error),
            n_correct_trials: n_correct,
            n_error_trials: n_error,
            ci: None,
        }
    }
}

/// Per-response agreement outcomes, checked against the trial set.
struct Scored<'a> {
    participant: &'a str,
    model_correct: bool,
    agrees: bool,
}

fn score<'a>(tset: &TrialSet, responses: &'a [Response]) -> Result<Vec<Scored<'a>>> {
    let mut seen = HashSet::new();
    responses
        .iter()
        .map(|r| {
            let trial = tset
                .trials
                .get(r.trial_index)
                .ok_or(Error::DanglingTrial(r.trial_index))?;
            if r.choice != trial.y_star && r.choice != trial.y_alt {
                return Err(Error::InvalidChoice {
                    trial_index: r.trial_index,
                    choice: r.choice.clone(),
                });
            }
            if !seen.insert((r.participant.as_str(), r.trial_index)) {
                return Err(Error::DuplicateResponse {
                    participant: r.participant.clone(),
                    trial_index: r.trial_index,
                });
            }
            Ok(Scored {
                participant: &r.participant,
                model_correct: trial.model_correct,
                agrees: r.choice == trial.y_star,
            })
        })
        .collect()
}

pub fn fidelity_report(tset: &TrialSet, responses: &[Response]) -> Result<FidelityReport> {
    let scored = score(tset, responses)?;
    let (mut ch, mut nc, mut eh, mut ne) = (0, 0, 0, 0);
    for s in &scored {
        if s.model_correct {
            nc += 1;
            ch += usize::from(s.agrees);
        } else {
            ne += 1;
            eh += usize::from(s.agrees);
        }
    }
    Ok(FidelityReport::from_counts(ch, nc, eh, ne))
}

/// Report with participant-bootstrap intervals on each statistic.
pub fn fidelity_report_with_ci(
    tset: &TrialSet,
    responses: &[Response],
    n_resamples: usize,
    seed: u64,
    method: BootstrapMethod,
) -> Result<FidelityReport> {
    let mut report = fidelity_report(tset, responses)?;
    let scored = score(tset, responses)?;
    let grouped = |filter: &dyn Fn(&Scored) -> bool| -> Vec<Vec<bool>> {
        let mut by: BTreeMap<&str, Vec<bool>> = BTreeMap::new();
        for s in scored.iter().filter(|s| filter(s)) {
            by.entry(s.participant).or_default().push(s.agrees);
        }
        by.into_values().collect()
    };
    let ci = |groups: Vec<Vec<bool>>, label: &str| -> Option<Interval> {
        bootstrap_ci(&groups, n_resamples, seed::derive(seed, label, 0), method)
            .ok()
            .map(|(low, high)| Interval { low, high })
    };
    report.ci = Some(ReportCi {
        fidelity: ci(grouped(&|_| true), "ci/fidelity"),
        sensitivity: ci(grouped(&|s| s.model_correct), "ci/sensitivity"),
        specificity: ci(grouped(&|s| !s.model_correct), "ci/specificity"),
    });
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdealizedProfiles {
    pub random: FidelityReport,
    pub perfect: FidelityReport,
    pub belief_projector: FidelityReport,
}

/// Analytic profiles for one response per trial.
pub fn idealized_profiles(tset: &TrialSet) -> IdealizedProfiles {
    let nc = tset.n_correct();
    let ne = tset.n_incorrect();
    let random = FidelityReport {
        fidelity: 0.5,
        sensitivity: 0.5,
        specificity: 0.5,
        n_correct_trials: nc,
        n_error_trials: ne,
        ci: None,
    };
    IdealizedProfiles {
        random,
        perfect: FidelityReport::from_counts(nc, nc, ne, ne),
        belief_projector: FidelityReport::from_counts(nc, nc, 0, ne),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub participant: String,
    pub total_ms: u64,
    pub n_trials: usize,
}

/// Participants averaging at least one second per trial.
pub fn exclusion_filter(sessions: &[Session]) -> Result<Vec<String>> {
    let mut kept = Vec::new();
    for s in sessions {
        if s.n_trials == 0 {
            return Err(Error::InvalidConfig(format!(
                "session {} has no trials",
                s.participant
            )));
        }
        if s.total_ms as f64 / s.n_trials as f64 >= MIN_MS_PER_TRIAL {
            kept.push(s.participant.clone());
        }
    }
    Ok(kept)
}

/// Sessions reconstructed from responses: total time is the sum of `rt_ms`.
pub fn sessions_from_responses(responses: &[Response]) -> Vec<Session> {
    let mut by: BTreeMap<&str, (u64, usize)> = BTreeMap::new();
    for r in responses {
        let e = by.entry(&r.participant).or_default();
        e.0 += r.rt_ms;
        e.1 += 1;
    }
    by.into_iter()
        .map(|(p, (total_ms, n_trials))| Session {
            participant: p.to_string(),
            total_ms,
            n_trials,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMethod {
    #[default]
    Percentile,
    /// Reflects the percentile interval about the point estimate.
    Basic,
}

/// Quantile with linear interpolation between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn pooled_mean(counts: &[(usize, usize)]) -> f64 {
    let (hits, n) = counts.iter().fold((0, 0), |(h, n), &(gh, gn)| (h + gh, n + gn));
    ratio(hits, n)
}

/// 95% interval for the pooled mean, resampling participants with replacement.
pub fn bootstrap_ci(
    groups: &[Vec<bool>],
    n_resamples: usize,
    seed: u64,
    method: BootstrapMethod,
) -> Result<(f64, f64)> {
    let counts: Vec<(usize, usize)> = groups
        .iter()
        .filter(|g| !g.is_empty())
        .map(|g| (g.iter().filter(|&&v| v).count(), g.len()))
        .collect();
    if counts.is_empty() {
        return Err(Error::EmptyInput("bootstrap groups"));
    }
    if n_resamples == 0 {
        return Err(Error::InvalidConfig("n_resamples must be at least 1".into()));
    }
    let mut stats: Vec<f64> = (0..n_resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed::rng(seed::derive(seed, "bootstrap", r as u64));
            let (mut hits, mut n) = (0, 0);
            for _ in 0..counts.len() {
                let (h, m) = counts[rng.random_range(0..counts.len())];
                hits += h;
                n += m;
            }
            ratio(hits, n)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let (lo, hi) = (quantile(&stats, 0.025), quantile(&stats, 0.975));
    Ok(match method {
        BootstrapMethod::Percentile => (lo, hi),
        BootstrapMethod::Basic => {
            let point = pooled_mean(&counts);
            ((2.0 * point - hi).max(0.0), (2.0 * point - lo).min(1.0))
        }
    })
}

/// Reads `participant,trial_index,choice,rt_ms` rows.
pub fn read_responses<R: Read>(reader: R) -> Result<Vec<Response>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn read_responses_file(path: impl AsRef<Path>) -> Result<Vec<Response>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_responses(file)
}

pub fn write_responses<W: Write>(writer: W, responses: &[Response]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in responses {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))
}
