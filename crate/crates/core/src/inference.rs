//! Exact disease inference.
//!
//! Under the one-disease-per-case assumption the joint weight of disease `j` is
//!
//! ```text
//! P(f+, f-, d^j) = prior_j * Π_{i ∈ f+} P(f_i | d_j) * Π_{k ∈ f-} (1 - P(f_k | d_j))
//! ```
//!
//! so the posterior costs one pass over the parents of each observed finding.
//! Products are taken in log space and exact zeros are tracked symbolically.
//! [`general_noisy_or_posterior`] enumerates all disease configurations and is
//! only meant as a reference for small networks.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{DiseaseId, FindingId, QmrNetwork};

/// Known-positive and known-negative findings. The two sets never overlap.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Evidence {
    positive: BTreeSet<FindingId>,
    negative: BTreeSet<FindingId>,
}

impl Evidence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_sets(
        positive: impl IntoIterator<Item = FindingId>,
        negative: impl IntoIterator<Item = FindingId>,
    ) -> Result<Self> {
        let mut ev = Self::new();
        for f in positive {
            ev.positive.insert(f);
        }
        for f in negative {
            if ev.positive.contains(&f) {
                return Err(Error::ConflictingEvidence(f));
            }
            ev.negative.insert(f);
        }
        Ok(ev)
    }

    pub fn positive(&self) -> &BTreeSet<FindingId> {
        &self.positive
    }

    pub fn negative(&self) -> &BTreeSet<FindingId> {
        &self.negative
    }

    pub fn state(&self, f: FindingId) -> Option<bool> {
        if self.positive.contains(&f) {
            Some(true)
        } else if self.negative.contains(&f) {
            Some(false)
        } else {
            None
        }
    }

    pub fn is_observed(&self, f: FindingId) -> bool {
        self.positive.contains(&f) || self.negative.contains(&f)
    }

    pub fn len(&self) -> usize {
        self.positive.len() + self.negative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positive.is_empty() && self.negative.is_empty()
    }

    /// Record a new observation. Fails if the finding already has a state.
    pub fn observe(&mut self, f: FindingId, present: bool) -> Result<()> {
        if self.is_observed(f) {
            return Err(Error::AlreadyObserved(f));
        }
        self.set(f, Some(present));
        Ok(())
    }

    /// Overwrite the state of a finding; `None` forgets it.
    pub fn set(&mut self, f: FindingId, state: Option<bool>) {
        self.positive.remove(&f);
        self.negative.remove(&f);
        match state {
            Some(true) => {
                self.positive.insert(f);
            }
            Some(false) => {
                self.negative.insert(f);
            }
            None => {}
        }
    }

    /// A copy with one more observation; the caller guarantees `f` is unobserved.
    pub fn with(&self, f: FindingId, present: bool) -> Self {
        let mut ev = self.clone();
        ev.set(f, Some(present));
        ev
    }

    pub fn validate_for(&self, net: &QmrNetwork) -> Result<()> {
        match self.positive.iter().chain(&self.negative).find(|f| !net.contains_finding(**f)) {
            Some(&f) => Err(Error::UnknownFindingId(f)),
            None => Ok(()),
        }
    }
}

/// Log of a probability, with exact zero kept apart from the float domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogWeight {
    Zero,
    Ln(f64),
}

impl LogWeight {
    pub fn is_zero(self) -> bool {
        matches!(self, LogWeight::Zero)
    }

    /// Natural log, `-inf` for an exact zero.
    pub fn ln(self) -> f64 {
        match self {
            LogWeight::Zero => f64::NEG_INFINITY,
            LogWeight::Ln(v) => v,
        }
    }

    pub fn exp(self) -> f64 {
        match self {
            LogWeight::Zero => 0.0,
            LogWeight::Ln(v) => v.exp(),
        }
    }
}

/// Unnormalised log joint weight `log P(f+, f-, d^j)` of a single disease.
pub fn log_joint_weight(net: &QmrNetwork, ev: &Evidence, disease: DiseaseId) -> Result<LogWeight> {
    net.disease(disease)?;
    ev.validate_for(net)?;
    let prior = net.prior(disease);
    if prior == 0.0 {
        return Ok(LogWeight::Zero);
    }
    let mut acc = prior.ln();
    for &f in ev.positive() {
        let p = net.edge_prob(disease, f);
        if p == 0.0 {
            return Ok(LogWeight::Zero);
        }
        acc += p.ln();
    }
    for &f in ev.negative() {
        let p = net.edge_prob(disease, f);
        if p == 1.0 {
            return Ok(LogWeight::Zero);
        }
        if p > 0.0 {
            acc += (-p).ln_1p();
        }
    }
    Ok(LogWeight::Ln(acc))
}

/// Posterior over diseases, in disease-id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub probs: Vec<f64>,
    /// Every joint weight was zero; `probs` holds the prior instead.
    pub degenerate: bool,
}

impl Posterior {
    pub fn prob(&self, d: DiseaseId) -> f64 {
        self.probs[d.index()]
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// All diseases, most probable first; ties go to the lower id.
    pub fn ranking(&self) -> Vec<(DiseaseId, f64)> {
        let mut ranked: Vec<(DiseaseId, f64)> =
            self.probs.iter().enumerate().map(|(i, &p)| (DiseaseId(i), p)).collect();
        ranked.sort_by(|a, b| rank_order(*a, *b));
        ranked
    }

    /// Position of `d` in [`Self::ranking`], zero-based.
    pub fn rank_of(&self, d: DiseaseId) -> usize {
        let p = self.prob(d);
        self.probs
            .iter()
            .enumerate()
            .filter(|&(i, &q)| q > p || (q == p && i < d.index()))
            .count()
    }
}

fn rank_order(a: (DiseaseId, f64), b: (DiseaseId, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Exact one-disease posterior P(d_j = 1 | f+, f-).
///
/// When every disease has zero joint weight the prior is returned with
/// `degenerate` set.
pub fn posterior(net: &QmrNetwork, ev: &Evidence) -> Result<Posterior> {
    ev.validate_for(net)?;
    Ok(posterior_unchecked(net, ev))
}

pub(crate) fn posterior_unchecked(net: &QmrNetwork, ev: &Evidence) -> Posterior {
    let n = net.n_diseases();
    let mut log_w: Vec<f64> = net.diseases().iter().map(|d| d.prior.ln()).collect();
    let mut alive: Vec<bool> = net.diseases().iter().map(|d| d.prior > 0.0).collect();
    let mut hits = vec![0usize; n];

    // Same accumulation order as `log_joint_weight`: prior, positives, negatives.
    for &f in ev.positive() {
        for &(d, p) in net.diseases_of(f) {
            log_w[d.index()] += p.ln();
            hits[d.index()] += 1;
        }
    }
    let need = ev.positive().len();
    for (a, &h) in alive.iter_mut().zip(&hits) {
        *a &= h == need;
    }
    for &f in ev.negative() {
        for &(d, p) in net.diseases_of(f) {
            if p == 1.0 {
                alive[d.index()] = false;
            } else {
                log_w[d.index()] += (-p).ln_1p();
            }
        }
    }

    normalize(net, &log_w, &alive)
}

fn normalize(net: &QmrNetwork, log_w: &[f64], alive: &[bool]) -> Posterior {
    let max = log_w
        .iter()
        .zip(alive)
        .filter(|(_, &a)| a)
        .map(|(&w, _)| w)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Posterior { probs: net.priors(), degenerate: true };
    }
    let sum: f64 = log_w.iter().zip(alive).filter(|(_, &a)| a).map(|(&w, _)| (w - max).exp()).sum();
    let lse = max + sum.ln();
    let probs = log_w
        .iter()
        .zip(alive)
        .map(|(&w, &a)| if a { (w - lse).exp() } else { 0.0 })
        .collect();
    Posterior { probs, degenerate: false }
}

/// The `k` most probable diseases; ties go to the lower id.
pub fn top_k(post: &Posterior, k: usize) -> Result<Vec<(DiseaseId, f64)>> {
    let n = post.len();
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    let mut ranked = post.ranking();
    ranked.truncate(k);
    Ok(ranked)
}

/// Largest network [`general_noisy_or_posterior`] will enumerate.
pub const MAX_ENUMERATION_DISEASES: usize = 20;

/// Prior over joint disease configurations used by the enumeration reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointPrior {
    /// Each disease present independently with probability `prior_j`.
    IndependentBernoulli,
    /// Exactly one disease present, chosen with probability `prior_j`.
    OneHot,
}

/// Marginals P(d_j = 1 | f+, f-) by enumerating all 2^n configurations under the
/// leak-free noisy-OR likelihood `P(f = 0 | d) = Π_j (1 - p_fj)^{d_j}`.
pub fn general_noisy_or_posterior(net: &QmrNetwork, ev: &Evidence, prior: JointPrior) -> Result<Vec<f64>> {
    let n = net.n_diseases();
    if n > MAX_ENUMERATION_DISEASES {
        return Err(Error::TooManyDiseases { n, max: MAX_ENUMERATION_DISEASES });
    }
    ev.validate_for(net)?;
    let priors = net.priors();
    let mut marginals = vec![0.0; n];
    let mut total = 0.0;
    for mask in 0u32..(1u32 << n) {
        let weight = match prior {
            JointPrior::IndependentBernoulli => (0..n)
                .map(|j| if mask >> j & 1 == 1 { priors[j] } else { 1.0 - priors[j] })
                .product::<f64>(),
            JointPrior::OneHot if mask.count_ones() == 1 => priors[mask.trailing_zeros() as usize],
            JointPrior::OneHot => 0.0,
        };
        if weight == 0.0 {
            continue;
        }
        let all_absent = |f: FindingId| -> f64 {
            net.diseases_of(f)
                .iter()
                .filter(|(d, _)| mask >> d.index() & 1 == 1)
                .map(|(_, p)| 1.0 - p)
                .product()
        };
        let likelihood = ev.positive().iter().map(|&f| 1.0 - all_absent(f)).product::<f64>()
            * ev.negative().iter().map(|&f| all_absent(f)).product::<f64>();
        let joint = weight * likelihood;
        if joint == 0.0 {
            continue;
        }
        total += joint;
        for (j, m) in marginals.iter_mut().enumerate() {
            if mask >> j & 1 == 1 {
                *m += joint;
            }
        }
    }
    if total == 0.0 {
        return Err(Error::ZeroProbabilityEvidence);
    }
    Ok(marginals.into_iter().map(|m| m / total).collect())
}
