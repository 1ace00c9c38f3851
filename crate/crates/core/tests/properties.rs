//! Randomized checks of inference and inquiry against the dense oracles in
//! `common`.

mod common;

use common::{
    alg3_candidates, brute_utility, direct_posterior, one_hot_enumeration, random_evidence, random_network, rng,
    two_level_paths, Divergence,
};
use ddx_core::io::{network_to_json, parse_network};
use ddx_core::{
    candidate_findings, lookahead_value, posterior, score_candidates, select_next, utility, Evidence, Execution, FindingId,
    LookaheadConfig, NetworkFormat, QmrNetwork, UtilityKind,
};
use proptest::prelude::*;

fn setup(seed: u64, need_positive: bool) -> (QmrNetwork, Evidence) {
    let mut r = rng(seed);
    let net = random_network(&mut r, 9, 10);
    let ev = random_evidence(&mut r, &net, need_positive);
    (net, ev)
}

fn unobserved(net: &QmrNetwork, ev: &Evidence) -> Vec<FindingId> {
    (0..net.n_findings()).map(FindingId).filter(|f| !ev.is_observed(*f)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn posterior_agrees_with_direct_products_and_enumeration(seed in any::<u64>()) {
        let (net, ev) = setup(seed, false);
        let post = posterior(&net, &ev).unwrap();
        let direct = direct_posterior(&net, &ev);
        let enumerated = one_hot_enumeration(&net, &ev);
        prop_assert_eq!(post.degenerate, direct.is_none());
        if let (Some(direct), Some(enumerated)) = (direct, enumerated) {
            for j in 0..net.n_diseases() {
                prop_assert!((post.probs[j] - direct[j]).abs() < 1e-12);
                prop_assert!((post.probs[j] - enumerated[j]).abs() < 1e-12);
            }
            let total: f64 = post.probs.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kl_and_ig_utilities_coincide_and_match_brute_force(seed in any::<u64>()) {
        let (net, ev) = setup(seed, false);
        for f in unobserved(&net, &ev) {
            let kl = utility(&net, &ev, f, UtilityKind::Kl).unwrap();
            let ig = utility(&net, &ev, f, UtilityKind::Ig).unwrap();
            prop_assert!(kl >= -1e-12, "negative utility {kl}");
            prop_assert!((kl - ig).abs() < 1e-9, "{kl} vs {ig}");
            let brute = brute_utility(&net, &ev, f, Divergence::Kl);
            prop_assert!((kl - brute).abs() < 1e-9, "{kl} vs brute {brute}");
        }
    }

    #[test]
    fn pruned_candidates_keep_the_argmax(seed in any::<u64>()) {
        let (net, ev) = setup(seed, true);
        let pruned = candidate_findings(&net, &ev);
        prop_assert_eq!(&pruned, &alg3_candidates(&net, &ev));

        let mut best: Option<(FindingId, f64)> = None;
        for f in unobserved(&net, &ev) {
            let u = brute_utility(&net, &ev, f, Divergence::Kl);
            if best.is_none_or(|(_, b)| u > b + 1e-12) {
                best = Some((f, u));
            }
        }
        let picked = select_next(&net, &ev, LookaheadConfig::default()).unwrap();
        match (picked, best) {
            (Some(p), Some((_, u))) => prop_assert!((p.utility - u).abs() < 1e-9, "{} vs {u}", p.utility),
            (None, _) => prop_assert!(pruned.is_empty()),
            (Some(p), None) => prop_assert!(false, "picked {:?} with nothing unobserved", p),
        }
    }

    #[test]
    fn two_step_value_dominates_and_matches_path_enumeration(seed in any::<u64>()) {
        let (net, ev) = setup(seed, true);
        for f in candidate_findings(&net, &ev) {
            for (kind, div) in [(UtilityKind::Kl, Divergence::Kl), (UtilityKind::Ig, Divergence::Ig)] {
                let v1 = lookahead_value(&net, &ev, f, 1, kind).unwrap();
                let v2 = lookahead_value(&net, &ev, f, 2, kind).unwrap();
                prop_assert!(v2 >= v1 - 1e-9, "{v2} < {v1}");
                let paths = two_level_paths(&net, &ev, f, div);
                prop_assert!((v2 - paths).abs() < 1e-9, "{v2} vs {paths}");
            }
        }
    }

    #[test]
    fn scoring_is_identical_sequentially_and_in_parallel(seed in any::<u64>(), depth in 1usize..=2) {
        let (net, ev) = setup(seed, true);
        let cfg = LookaheadConfig::new(depth, UtilityKind::Kl);
        let seq = score_candidates(&net, &ev, cfg, &Default::default(), Execution::Sequential).unwrap();
        let par = score_candidates(&net, &ev, cfg, &Default::default(), Execution::Parallel).unwrap();
        prop_assert_eq!(seq, par);
    }

    #[test]
    fn native_json_round_trips(seed in any::<u64>()) {
        let mut r = rng(seed);
        let net = random_network(&mut r, 9, 10);
        let back = parse_network(&network_to_json(&net), NetworkFormat::Native).unwrap();
        prop_assert_eq!(back.to_spec(), net.to_spec());
        prop_assert_eq!(back.priors(), net.priors());
    }

    #[test]
    fn adjacency_indexes_mirror_the_edge_list(seed in any::<u64>()) {
        let mut r = rng(seed);
        let net = random_network(&mut r, 9, 10);
        let mut from_disease = 0;
        for d in (0..net.n_diseases()).map(ddx_core::DiseaseId) {
            let list = net.findings_of(d);
            prop_assert!(list.windows(2).all(|w| w[0].0 < w[1].0));
            for &(f, p) in list {
                prop_assert_eq!(net.edge_prob(d, f), p);
                prop_assert!(net.diseases_of(f).contains(&(d, p)));
            }
            from_disease += list.len();
        }
        let from_finding: usize = (0..net.n_findings()).map(|i| net.diseases_of(FindingId(i)).len()).sum();
        prop_assert_eq!(from_disease, net.edges().len());
        prop_assert_eq!(from_finding, net.edges().len());
        for e in net.edges() {
            prop_assert!(e.prob > 0.0 && e.prob <= 1.0);
        }
    }
}

#[test]
fn symcat_map_round_trips_through_native_format() {
    let net = ddx_core::fixtures::snapshot();
    let back = parse_network(&network_to_json(&net), NetworkFormat::Native).unwrap();
    assert_eq!(back.to_spec(), net.to_spec());
    assert_eq!(back.priors(), vec![0.5, 0.5]);
}
