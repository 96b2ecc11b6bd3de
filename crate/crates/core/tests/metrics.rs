use bayesteach::metrics::*;
use bayesteach::seed;
use bayesteach::trialgen::{
    ConditionFlags, ExamplesPolicy, LabelsCondition, MapCondition, Trial, TrialAssets, TrialSet,
};
use rand::Rng;

fn trial(i: usize, correct: bool) -> Trial {
    let (s, a) = (format!("s{}", i % 7), format!("a{}", i % 5));
    Trial {
        target: format!("t{i}"),
        ground_truth: if correct { s.clone() } else { a.clone() },
        y_star: s,
        y_alt: a,
        model_correct: correct,
        category_accuracy: 0.7,
        examples: None,
        f_l: None,
        bin: None,
        bin_widened: false,
        familiarity: None,
        condition: ConditionFlags {
            labels: LabelsCondition::Specific,
            examples: ExamplesPolicy::None,
            map: MapCondition::None,
        },
        assets: TrialAssets::default(),
    }
}

fn fifty_hundred() -> TrialSet {
    TrialSet {
        trials: (0..150).map(|i| trial(i, i < 50)).collect(),
        seed: 1,
        policy: ExamplesPolicy::None,
        categories: vec![],
    }
}

#[test]
fn random_agent_scores_one_half() {
    let ts = fifty_hundred();
    let mut rng = seed::rng(10);
    let responses: Vec<Response> = (0..100)
        .flat_map(|p| (0..150).map(move |i| (p, i)))
        .map(|(p, i)| {
            let t = &ts.trials[i];
            Response {
                participant: format!("p{p}"),
                trial_index: i,
                choice: if rng.random_bool(0.5) { t.y_star.clone() } else { t.y_alt.clone() },
                rt_ms: 2000,
            }
        })
        .collect();
    assert_eq!(responses.len(), 15_000);
    let r = fidelity_report(&ts, &responses).unwrap();
    for v in [r.fidelity, r.sensitivity, r.specificity] {
        assert!((v - 0.5).abs() < 0.02, "{r:?}");
    }
    let total = (r.n_correct_trials + r.n_error_trials) as f64;
    let recombined = r.sensitivity * r.n_correct_trials as f64 + r.specificity * r.n_error_trials as f64;
    assert!((r.fidelity * total - recombined).abs() < 1e-9);
}

#[test]
fn belief_projector_gets_one_third() {
    let ts = fifty_hundred();
    let responses: Vec<Response> = ts
        .trials
        .iter()
        .enumerate()
        .map(|(i, t)| Response {
            participant: "bp".into(),
            trial_index: i,
            choice: t.ground_truth.clone(),
            rt_ms: 1000,
        })
        .collect();
    let r = fidelity_report(&ts, &responses).unwrap();
    assert_eq!((r.sensitivity, r.specificity), (1.0, 0.0));
    assert_eq!(r.fidelity, 1.0 / 3.0);
}

#[test]
fn bootstrap_interval_coverage() {
    let mut covered = 0;
    for rep in 0..200u64 {
        let mut rng = seed::rng(seed::derive(2024, "coverage", rep));
        let groups: Vec<Vec<bool>> = (0..40)
            .map(|_| (0..30).map(|_| rng.random_bool(0.5)).collect())
            .collect();
        let (lo, hi) = bootstrap_ci(&groups, DEFAULT_RESAMPLES, rep, BootstrapMethod::Percentile).unwrap();
        if lo <= 0.5 && 0.5 <= hi {
            covered += 1;
        }
    }
    assert!(covered >= 186, "covered {covered}/200");
}

#[test]
fn report_with_intervals_brackets_point_estimates() {
    let ts = fifty_hundred();
    let mut rng = seed::rng(3);
    let responses: Vec<Response> = (0..12)
        .flat_map(|p| (0..150).map(move |i| (p, i)))
        .map(|(p, i)| {
            let t = &ts.trials[i];
            let agree = rng.random_bool(if t.model_correct { 0.8 } else { 0.3 });
            Response {
                participant: format!("p{p}"),
                trial_index: i,
                choice: if agree { t.y_star.clone() } else { t.y_alt.clone() },
                rt_ms: 1500,
            }
        })
        .collect();
    let r = fidelity_report_with_ci(&ts, &responses, 2000, 5, BootstrapMethod::Percentile).unwrap();
    let ci = r.ci.clone().unwrap();
    for (v, iv) in [
        (r.fidelity, ci.fidelity),
        (r.sensitivity, ci.sensitivity),
        (r.specificity, ci.specificity),
    ] {
        let iv = iv.unwrap();
        assert!(iv.low <= v && v <= iv.high, "{v} not in {iv:?}");
    }
    let basic = fidelity_report_with_ci(&ts, &responses, 2000, 5, BootstrapMethod::Basic).unwrap();
    assert_eq!(basic.fidelity, r.fidelity);
}

#[test]
fn exclusion_is_monotone_in_time() {
    for ms in (100_000u64..200_000).step_by(997) {
        let s = |t| Session {
            participant: "p".into(),
            total_ms: t,
            n_trials: 150,
        };
        let before = exclusion_filter(&[s(ms)]).unwrap().len();
        let after = exclusion_filter(&[s(ms + 500)]).unwrap().len();
        assert!(after >= before);
        assert_eq!(before == 1, ms >= 150_000);
    }
}
