//! Statistical and end-to-end checks of the simulator and the evaluation
//! harness. Tolerances are in binomial standard errors; with the fixed seeds
//! used here the outcomes are deterministic.

mod common;

use std::collections::BTreeMap;

use common::{direct_posterior, random_network, rng};
use ddx_core::eval::{cheater_evaluate, evaluate_dialogue, evaluate_with, grid_search, run_episodes, EvalOptions, UnrecordedAnswer};
use ddx_core::simulator::{case_rng, draw_raw, sample_cohort, InitialFinding};
use ddx_core::{
    build_network_from_cases, fixtures, generate_synthetic_network, DialogueCase, DiseaseId, Execution, FindingId,
    LookaheadConfig, NetworkBuilder, PriorMode, QmrNetwork, SessionConfig, SimulatedCase, SyntheticParams, UtilityKind,
};

fn within(observed: f64, expected: f64, n: usize, sigmas: f64) -> bool {
    let se = (expected * (1.0 - expected) / n as f64).sqrt();
    (observed - expected).abs() <= sigmas * se.max(1e-12)
}

fn skewed() -> QmrNetwork {
    NetworkBuilder::new()
        .disease("rare", 0.1)
        .disease("common", 0.6)
        .disease("middling", 0.3)
        .finding("a")
        .finding("b")
        .finding("c")
        .edge("rare", "a", 0.05)
        .edge("common", "a", 0.4)
        .edge("common", "b", 0.2)
        .edge("middling", "c", 0.9)
        .build()
        .unwrap()
}

#[test]
fn disease_frequencies_follow_priors() {
    let net = skewed();
    let n = 20_000;
    let cases = sample_cohort(&net, n, 99, InitialFinding::Uniform, Execution::default()).unwrap();
    for d in 0..net.n_diseases() {
        let freq = cases.iter().filter(|c| c.true_disease == DiseaseId(d)).count() as f64 / n as f64;
        assert!(within(freq, net.prior(DiseaseId(d)), n, 4.0), "{}: {freq}", net.disease_name(DiseaseId(d)));
    }
    // Redraws keep the disease, so even a disease that is usually silent keeps its share,
    // and every case has at least one positive finding, the opening one.
    assert!(cases.iter().all(|c| c.finding_states[c.initial_positive.index()]));
}

#[test]
fn unconditioned_finding_rates_match_edges() {
    let net = fixtures::snapshot();
    let aaa = net.disease_id("abdominal-aortic-aneurysm").unwrap();
    let n = 20_000;
    let mut counts = vec![0usize; net.n_findings()];
    for i in 0..n {
        let states = draw_raw(&net, aaa, &mut case_rng(5, i as u64));
        for (c, s) in counts.iter_mut().zip(states) {
            *c += s as usize;
        }
    }
    for f in (0..net.n_findings()).map(FindingId) {
        let p = net.edge_prob(aaa, f);
        let rate = counts[f.index()] as f64 / n as f64;
        assert!(within(rate, p, n, 4.0), "{}: {rate} vs {p}", net.finding_name(f));
    }
    let back = net.finding_id("Back pain").unwrap();
    assert!((counts[back.index()] as f64 / n as f64 - 0.35).abs() < 0.015);
}

#[test]
fn uniform_opening_finding_is_uniform_over_positives() {
    let net = NetworkBuilder::new().disease("d", 1.0).finding("x").finding("y").edge("d", "x", 1.0).edge("d", "y", 1.0).build().unwrap();
    let n = 10_000;
    let cases = sample_cohort(&net, n, 3, InitialFinding::Uniform, Execution::default()).unwrap();
    let x = cases.iter().filter(|c| c.initial_positive == FindingId(0)).count() as f64 / n as f64;
    assert!(within(x, 0.5, n, 4.0), "{x}");
    let cases = sample_cohort(&net, 100, 3, InitialFinding::MostProbable, Execution::default()).unwrap();
    assert!(cases.iter().all(|c| c.initial_positive == FindingId(0)), "ties go to the lower id");
}

/// Exact cheater top-1: enumerate every joint state of each disease's findings,
/// condition on at least one positive, and rank with the dense oracle.
fn exact_cheater_top1(net: &QmrNetwork) -> f64 {
    let mut total = 0.0;
    for d in (0..net.n_diseases()).map(DiseaseId) {
        let children = net.findings_of(d);
        assert!(children.len() <= 12);
        let silent: f64 = children.iter().map(|(_, p)| 1.0 - p).product();
        let mut hit = 0.0;
        for mask in 1u32..(1 << children.len()) {
            let mut prob = 1.0;
            let mut pos = Vec::new();
            for (k, &(f, p)) in children.iter().enumerate() {
                if mask >> k & 1 == 1 {
                    prob *= p;
                    pos.push(f);
                } else {
                    prob *= 1.0 - p;
                }
            }
            if prob == 0.0 {
                continue;
            }
            let neg: Vec<FindingId> = (0..net.n_findings()).map(FindingId).filter(|f| !pos.contains(f)).collect();
            let ev = ddx_core::Evidence::from_sets(pos, neg).unwrap();
            let post = direct_posterior(net, &ev).unwrap();
            let mine = post[d.index()];
            let wins = post.iter().enumerate().all(|(j, &q)| q < mine || (q == mine && j >= d.index()));
            if wins {
                hit += prob;
            }
        }
        total += net.prior(d) * hit / (1.0 - silent);
    }
    total
}

#[test]
fn cheater_top1_matches_exact_expectation() {
    let n = 20_000;
    let snapshot = fixtures::snapshot();
    let mut nets = vec![snapshot];
    let mut r = rng(2024);
    for _ in 0..3 {
        nets.push(random_network(&mut r, 6, 8));
    }
    for net in &nets {
        let expected = exact_cheater_top1(net);
        let report = cheater_evaluate(net, n, 17).unwrap();
        assert!(within(report.top1.value, expected, n, 4.0), "{} vs exact {expected}", report.top1.value);
        assert_eq!(report.avg_steps, 0.0);
    }
}

#[test]
fn reports_do_not_depend_on_execution_mode() {
    let net = generate_synthetic_network(&SyntheticParams::symcat_like(60), 8).unwrap();
    for depth in [1, 2] {
        let cfg = SessionConfig { max_steps: 8, lookahead: LookaheadConfig::new(depth, UtilityKind::Kl), ..SessionConfig::default() };
        let n = if depth == 1 { 300 } else { 60 };
        let seq = evaluate_with(&net, &cfg, n, 4, &EvalOptions { exec: Execution::Sequential, ..Default::default() }).unwrap();
        let par = evaluate_with(&net, &cfg, n, 4, &EvalOptions { exec: Execution::Parallel, ..Default::default() }).unwrap();
        assert_eq!(seq, par);
        assert_eq!(serde_json::to_string(&seq).unwrap(), serde_json::to_string(&par).unwrap());
    }
    let base = SessionConfig::default();
    let seq = grid_search(&net, &base, &[0.01, 0.1], &[5, 10], 100, 1, &EvalOptions { exec: Execution::Sequential, ..Default::default() }).unwrap();
    let par = grid_search(&net, &base, &[0.01, 0.1], &[5, 10], 100, 1, &EvalOptions::default()).unwrap();
    assert_eq!(seq, par);
}

#[test]
fn stopping_is_monotone_per_episode() {
    let net = generate_synthetic_network(&SyntheticParams::hpo_like(100), 21).unwrap();
    let cases = sample_cohort(&net, 300, 2, InitialFinding::Uniform, Execution::default()).unwrap();
    let steps = |thresh: f64, max_steps: usize| -> Vec<usize> {
        let cfg = SessionConfig { max_steps, utility_threshold: thresh, ..SessionConfig::default() };
        run_episodes(&net, &cfg, &cases, Execution::default()).unwrap().iter().map(|e| e.steps).collect()
    };
    let thresholds = [0.0, 0.01, 0.05, 0.1, 0.3];
    for m in [5, 10, 20] {
        let runs: Vec<Vec<usize>> = thresholds.iter().map(|&t| steps(t, m)).collect();
        for w in runs.windows(2) {
            assert!(w[0].iter().zip(&w[1]).all(|(lo, hi)| lo >= hi), "raising the threshold lengthened an episode");
        }
        assert!(runs[0].iter().all(|&s| s <= m));
    }
    let small = steps(0.01, 5);
    let large = steps(0.01, 20);
    assert!(small.iter().zip(&large).all(|(s, l)| s <= l && (*s == 5 || s == l)));
}

fn as_dialogue(net: &QmrNetwork, case: &SimulatedCase) -> DialogueCase {
    let name = |f: FindingId| net.finding_name(f).to_string();
    let explicit = [(name(case.initial_positive), true)].into_iter().collect();
    let implicit = (0..net.n_findings())
        .map(FindingId)
        .filter(|&f| f != case.initial_positive)
        .map(|f| (name(f), case.finding_states[f.index()]))
        .collect();
    DialogueCase { disease_name: net.disease_name(case.true_disease).to_string(), explicit, implicit }
}

#[test]
fn built_network_recovers_generating_parameters() {
    let truth = generate_synthetic_network(&SyntheticParams::symcat_like(12), 31).unwrap();
    let n = 12_000;
    let cases = sample_cohort(&truth, n, 6, InitialFinding::Uniform, Execution::default()).unwrap();
    let dialogues: Vec<DialogueCase> = cases.iter().map(|c| as_dialogue(&truth, c)).collect();
    let (built, warnings) = build_network_from_cases(&dialogues, PriorMode::Empirical).unwrap();
    assert!(warnings.is_empty());
    assert_eq!(built.n_diseases(), truth.n_diseases());

    let mut per_disease = BTreeMap::new();
    for c in &cases {
        *per_disease.entry(c.true_disease).or_insert(0usize) += 1;
    }
    let mut checked = 0;
    for d in (0..truth.n_diseases()).map(DiseaseId) {
        let nd = per_disease[&d];
        let bd = built.disease_id(truth.disease_name(d)).unwrap();
        assert!(within(built.prior(bd), truth.prior(d), n, 4.5));
        // Cases are conditioned on at least one positive finding, which inflates
        // every rate by the same factor.
        let silent: f64 = truth.findings_of(d).iter().map(|(_, p)| 1.0 - p).product();
        for f in (0..truth.n_findings()).map(FindingId) {
            let expected = truth.edge_prob(d, f) / (1.0 - silent);
            let got = built.finding_id(truth.finding_name(f)).map_or(0.0, |bf| built.edge_prob(bd, bf));
            if expected == 0.0 {
                assert_eq!(got, 0.0);
            } else {
                assert!(within(got, expected, nd, 4.5), "{d} {f}: {got} vs {expected} over {nd}");
                checked += 1;
            }
        }
    }
    assert_eq!(checked, truth.edges().len());
}

#[test]
fn network_built_on_the_test_split_scores_at_least_as_well() {
    let truth = generate_synthetic_network(&SyntheticParams::symcat_like(40), 12).unwrap();
    let to_dialogue = |seed, n| -> Vec<DialogueCase> {
        sample_cohort(&truth, n, seed, InitialFinding::Uniform, Execution::default())
            .unwrap()
            .iter()
            .map(|c| as_dialogue(&truth, c))
            .collect()
    };
    let train = to_dialogue(1, 2_000);
    let test = to_dialogue(2, 400);
    let (train_net, _) = build_network_from_cases(&train, PriorMode::Uniform).unwrap();
    let (self_net, _) = build_network_from_cases(&test, PriorMode::Uniform).unwrap();
    let cfg = SessionConfig { max_steps: 10, ..SessionConfig::default() };
    for mode in [UnrecordedAnswer::Absent, UnrecordedAnswer::Skip] {
        let (train_report, _) = evaluate_dialogue(&train_net, &test, &cfg, mode, Execution::default()).unwrap();
        let (self_report, episodes) = evaluate_dialogue(&self_net, &test, &cfg, mode, Execution::default()).unwrap();
        assert_eq!(self_report.n_cases, 400);
        assert_eq!(self_report.missing_disease, 0);
        assert!(episodes.iter().all(|e| e.steps <= 10));
        assert!(
            self_report.top1.value >= train_report.top1.value,
            "{mode:?}: self {} < train {}",
            self_report.top1.value,
            train_report.top1.value
        );
    }
}

#[test]
fn dialogue_cases_for_unknown_diseases_are_misses() {
    let net = fixtures::snapshot();
    let case = DialogueCase {
        disease_name: "appendicitis".into(),
        explicit: [("Sharp abdominal pain".to_string(), true)].into_iter().collect(),
        implicit: Default::default(),
    };
    let (report, episodes) =
        evaluate_dialogue(&net, &[case], &SessionConfig::default(), UnrecordedAnswer::Absent, Execution::default()).unwrap();
    assert_eq!(report.missing_disease, 1);
    assert_eq!(report.top5.hits, 0);
    assert!(episodes[0].rank.is_none());
}
