//! Reference implementations for cross-checking the engine.
//!
//! Everything here works from the edge list and the textbook formulas, with
//! plain products instead of logs, dense loops over all diseases and findings,
//! and no candidate pruning. Nothing calls back into the inference or inquiry
//! code under test.

#![allow(dead_code)]

use std::collections::BTreeSet;

use ddx_core::{DiseaseId, Evidence, FindingId, NetworkBuilder, QmrNetwork};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense edge matrix `p[d][f]`, zero where there is no edge.
pub fn edge_matrix(net: &QmrNetwork) -> Vec<Vec<f64>> {
    let mut p = vec![vec![0.0; net.n_findings()]; net.n_diseases()];
    for e in net.edges() {
        p[e.disease.index()][e.finding.index()] = e.prob;
    }
    p
}

/// Joint weights prior_j * Π P(f+|d_j) * Π (1 - P(f-|d_j)) as plain products.
pub fn direct_weights(net: &QmrNetwork, ev: &Evidence) -> Vec<f64> {
    let p = edge_matrix(net);
    (0..net.n_diseases())
        .map(|j| {
            let mut w = net.diseases()[j].prior;
            for f in ev.positive() {
                w *= p[j][f.index()];
            }
            for f in ev.negative() {
                w *= 1.0 - p[j][f.index()];
            }
            w
        })
        .collect()
}

/// Normalized direct weights, or `None` when the evidence is impossible.
pub fn direct_posterior(net: &QmrNetwork, ev: &Evidence) -> Option<Vec<f64>> {
    let w = direct_weights(net, ev);
    let z: f64 = w.iter().sum();
    (z > 0.0).then(|| w.iter().map(|x| x / z).collect())
}

/// Posterior over one-hot disease configurations with the noisy-OR likelihood
/// `P(f = 1 | config) = 1 - Π_{active j} (1 - p_fj)`, enumerated over every
/// configuration of `n` binary diseases and conditioned on exactly one active.
pub fn one_hot_enumeration(net: &QmrNetwork, ev: &Evidence) -> Option<Vec<f64>> {
    let n = net.n_diseases();
    assert!(n <= 12);
    let p = edge_matrix(net);
    let mut marg = vec![0.0; n];
    let mut z = 0.0;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() != 1 {
            continue;
        }
        let active: Vec<usize> = (0..n).filter(|j| mask >> j & 1 == 1).collect();
        let prior: f64 = active.iter().map(|&j| net.diseases()[j].prior).product();
        let off = |f: &FindingId| active.iter().map(|&j| 1.0 - p[j][f.index()]).product::<f64>();
        let lik: f64 = ev.positive().iter().map(|f| 1.0 - off(f)).product::<f64>()
            * ev.negative().iter().map(off).product::<f64>();
        let w = prior * lik;
        z += w;
        for &j in &active {
            marg[j] += w;
        }
    }
    (z > 0.0).then(|| marg.iter().map(|m| m / z).collect())
}

fn bernoulli_kl(a: f64, r: f64) -> f64 {
    let t = |x: f64, y: f64| if x == 0.0 { 0.0 } else { x * (x / y).ln() };
    t(a, r) + t(1.0 - a, 1.0 - r)
}

fn binary_entropy(x: f64) -> f64 {
    let t = |x: f64| if x == 0.0 { 0.0 } else { -x * x.ln() };
    t(x) + t(1.0 - x)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Divergence {
    Kl,
    Ig,
}

fn divergence(kind: Divergence, leaf: &[f64], root: &[f64]) -> f64 {
    leaf.iter()
        .zip(root)
        .map(|(&a, &r)| match kind {
            Divergence::Kl => bernoulli_kl(a, r),
            Divergence::Ig => binary_entropy(r) - binary_entropy(a),
        })
        .sum()
}

fn with(ev: &Evidence, f: FindingId, y: bool) -> Evidence {
    let (mut pos, mut neg): (Vec<_>, Vec<_>) = (ev.positive().iter().copied().collect(), ev.negative().iter().copied().collect());
    if y {
        pos.push(f)
    } else {
        neg.push(f)
    }
    Evidence::from_sets(pos, neg).unwrap()
}

/// P(f = y | ev) as a ratio of summed joint weights.
pub fn outcome_prob(net: &QmrNetwork, ev: &Evidence, f: FindingId, y: bool) -> f64 {
    let num: f64 = direct_weights(net, &with(ev, f, y)).iter().sum();
    let den: f64 = direct_weights(net, ev).iter().sum();
    num / den
}

/// Σ_y P(y) Σ_j D(P(d_j | ev, f=y) ‖ P(d_j | ev)) over all diseases.
pub fn brute_utility(net: &QmrNetwork, ev: &Evidence, f: FindingId, kind: Divergence) -> f64 {
    let Some(root) = direct_posterior(net, ev) else { return 0.0 };
    [true, false]
        .into_iter()
        .filter_map(|y| {
            let py = outcome_prob(net, ev, f, y);
            let leaf = direct_posterior(net, &with(ev, f, y))?;
            Some(py * divergence(kind, &leaf, &root))
        })
        .sum()
}

/// Findings sharing a disease with some positive finding, minus observed ones;
/// every unobserved finding when nothing is positive.
pub fn alg3_candidates(net: &QmrNetwork, ev: &Evidence) -> BTreeSet<FindingId> {
    let p = edge_matrix(net);
    let unobserved = (0..net.n_findings()).map(FindingId).filter(|f| !ev.is_observed(*f));
    if ev.positive().is_empty() {
        return unobserved.collect();
    }
    unobserved
        .filter(|g| {
            ev.positive()
                .iter()
                .any(|f| (0..net.n_diseases()).any(|d| p[d][f.index()] > 0.0 && p[d][g.index()] > 0.0))
        })
        .collect()
}

/// Two-question value by enumerating every (f, y1, f2, y2) path: expectation over
/// answers, max over the second question, leaf compared with the root posterior.
pub fn two_level_paths(net: &QmrNetwork, ev: &Evidence, f: FindingId, kind: Divergence) -> f64 {
    let Some(root) = direct_posterior(net, ev) else { return 0.0 };
    let mut total = 0.0;
    for y1 in [true, false] {
        let p1 = outcome_prob(net, ev, f, y1);
        if p1 == 0.0 {
            continue;
        }
        let ev1 = with(ev, f, y1);
        let mid = direct_posterior(net, &ev1).unwrap();
        let mut best: Option<f64> = None;
        for f2 in alg3_candidates(net, &ev1) {
            let mut v = 0.0;
            for y2 in [true, false] {
                let p2 = outcome_prob(net, &ev1, f2, y2);
                if p2 == 0.0 {
                    continue;
                }
                let leaf = direct_posterior(net, &with(&ev1, f2, y2)).unwrap();
                v += p2 * divergence(kind, &leaf, &root);
            }
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
        total += p1 * best.unwrap_or_else(|| divergence(kind, &mid, &root));
    }
    total
}

/// Random small network: sparse edges with probabilities in (0, 1], occasionally
/// exactly 1, and random priors summing to 1.
pub fn random_network(rng: &mut ChaCha8Rng, max_diseases: usize, max_findings: usize) -> QmrNetwork {
    let n = rng.random_range(2..=max_diseases);
    let m = rng.random_range(2..=max_findings);
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let z: f64 = raw.iter().sum();
    let mut b = NetworkBuilder::new();
    for (j, r) in raw.iter().enumerate() {
        b = b.disease(format!("d{j}"), r / z);
    }
    for i in 0..m {
        b = b.finding(format!("f{i}"));
    }
    let density = rng.random_range(0.2..0.7);
    for j in 0..n {
        let mut any = false;
        for i in 0..m {
            if rng.random_bool(density) {
                any = true;
                let p = if rng.random_bool(0.05) { 1.0 } else { rng.random_range(0.01..1.0) };
                b = b.edge(format!("d{j}"), format!("f{i}"), p);
            }
        }
        if !any {
            let i = rng.random_range(0..m);
            b = b.edge(format!("d{j}"), format!("f{i}"), rng.random_range(0.01..1.0));
        }
    }
    b.build().expect("random network is valid")
}

/// Evidence consistent with some disease: states drawn from one disease, then a
/// random subset revealed. At least one positive when `need_positive`.
pub fn random_evidence(rng: &mut ChaCha8Rng, net: &QmrNetwork, need_positive: bool) -> Evidence {
    loop {
        let d = DiseaseId(rng.random_range(0..net.n_diseases()));
        let reveal = rng.random_range(0.2..0.8);
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for f in (0..net.n_findings()).map(FindingId) {
            let state = rng.random::<f64>() < net.edge_prob(d, f);
            if rng.random_bool(reveal) {
                if state {
                    pos.push(f)
                } else {
                    neg.push(f)
                }
            }
        }
        // Keep at least one finding unobserved.
        if pos.len() + neg.len() == net.n_findings() {
            continue;
        }
        if need_positive && pos.is_empty() {
            continue;
        }
        return Evidence::from_sets(pos, neg).unwrap();
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
