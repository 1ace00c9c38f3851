//! Finding selection by Bayesian experimental design.
//!
//! The utility of asking about finding `f` is
//!
//! ```text
//! U(f) = Σ_{y ∈ {0,1}} P(f = y | ev) Σ_j D( P(d_j | ev, f = y) ‖ P(d_j | ev) )
//! ```
//!
//! where each disease is treated as a Bernoulli variable and `D` is either the
//! KL divergence or the entropy reduction (IG). In expectation both equal the
//! summed per-disease mutual information `Σ_j I(d_j; f | ev)`, in nats.
//!
//! Multi-step lookahead is an expectimax: expectation over answers at every
//! level, maximisation over the next question below the root, and the leaf
//! belief is always compared against the root posterior.
//!
//! All computation is restricted to the diseases with non-zero root posterior.
//! Diseases outside that support stay at zero after any answer and contribute
//! nothing to either divergence.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::inference::{posterior_unchecked, Evidence, Posterior};
use crate::network::{DiseaseId, FindingId, QmrNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UtilityKind {
    #[default]
    Kl,
    Ig,
}

impl fmt::Display for UtilityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UtilityKind::Kl => "kl",
            UtilityKind::Ig => "ig",
        })
    }
}

impl FromStr for UtilityKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "kl" => Ok(Self::Kl),
            "ig" => Ok(Self::Ig),
            other => Err(format!("unknown utility {other:?} (expected kl or ig)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub finding: FindingId,
    /// Nats.
    pub utility: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LookaheadConfig {
    /// Number of questions searched ahead; 1 is plain greedy selection.
    pub depth: usize,
    pub utility: UtilityKind,
}

impl Default for LookaheadConfig {
    fn default() -> Self {
        Self { depth: 1, utility: UtilityKind::Kl }
    }
}

impl LookaheadConfig {
    pub fn new(depth: usize, utility: UtilityKind) -> Self {
        Self { depth, utility }
    }
}

fn check_unobserved(net: &QmrNetwork, ev: &Evidence, f: FindingId) -> Result<()> {
    ev.validate_for(net)?;
    if !net.contains_finding(f) {
        return Err(Error::UnknownFindingId(f));
    }
    if ev.is_observed(f) {
        return Err(Error::AlreadyObserved(f));
    }
    Ok(())
}

/// P(f = 1 | ev) = Σ_j P(d_j | ev) P(f | d_j).
pub fn outcome_probability(net: &QmrNetwork, ev: &Evidence, f: FindingId) -> Result<f64> {
    check_unobserved(net, ev, f)?;
    let post = posterior_unchecked(net, ev);
    Ok(net.diseases_of(f).iter().map(|&(d, p)| post.prob(d) * p).sum())
}

/// One-step utility of asking about `f`. Zero when the evidence is degenerate,
/// since no answer can move a prior-fallback posterior.
pub fn utility(net: &QmrNetwork, ev: &Evidence, f: FindingId, kind: UtilityKind) -> Result<f64> {
    lookahead_value(net, ev, f, 1, kind)
}

/// Expectimax value of asking `f` first and searching `depth - 1` further questions.
pub fn lookahead_value(
    net: &QmrNetwork,
    ev: &Evidence,
    f: FindingId,
    depth: usize,
    kind: UtilityKind,
) -> Result<f64> {
    check_unobserved(net, ev, f)?;
    if depth == 0 {
        return Err(Error::InfeasibleParameters("lookahead depth must be at least 1".into()));
    }
    let root = Belief::new(net, ev, kind);
    Ok(root.value(&root.probs, &mut Vec::new(), f, depth))
}

/// Findings linked through some disease to a positive finding, minus the
/// observed ones. Every other finding has zero utility. With no positive
/// findings all unobserved findings are returned.
pub fn candidate_findings(net: &QmrNetwork, ev: &Evidence) -> BTreeSet<FindingId> {
    if ev.positive().is_empty() {
        return net.findings().iter().map(|f| f.id).filter(|&f| !ev.is_observed(f)).collect();
    }
    let mut out = BTreeSet::new();
    let mut seen = vec![false; net.n_diseases()];
    for &f in ev.positive() {
        for &(d, _) in net.diseases_of(f) {
            if std::mem::replace(&mut seen[d.index()], true) {
                continue;
            }
            out.extend(net.findings_of(d).iter().map(|&(g, _)| g));
        }
    }
    out.retain(|&g| !ev.is_observed(g));
    out
}

/// Value of every candidate, in finding-id order.
pub fn score_candidates(
    net: &QmrNetwork,
    ev: &Evidence,
    cfg: LookaheadConfig,
    exclude: &BTreeSet<FindingId>,
    exec: Execution,
) -> Result<Vec<CandidateScore>> {
    ev.validate_for(net)?;
    let depth = cfg.depth.max(1);
    let candidates: Vec<FindingId> =
        candidate_findings(net, ev).into_iter().filter(|f| !exclude.contains(f)).collect();
    let root = Belief::new(net, ev, cfg.utility);
    Ok(exec.map(&candidates, |&f| CandidateScore {
        finding: f,
        utility: root.value(&root.probs, &mut Vec::new(), f, depth),
    }))
}

/// Highest-valued candidate, ties to the lowest finding id; `None` when nothing is left to ask.
pub fn select_next(net: &QmrNetwork, ev: &Evidence, cfg: LookaheadConfig) -> Result<Option<CandidateScore>> {
    select_next_with(net, ev, cfg, &BTreeSet::new(), Execution::default())
}

/// [`select_next`] skipping `exclude`, with explicit execution mode.
pub fn select_next_with(
    net: &QmrNetwork,
    ev: &Evidence,
    cfg: LookaheadConfig,
    exclude: &BTreeSet<FindingId>,
    exec: Execution,
) -> Result<Option<CandidateScore>> {
    let scores = score_candidates(net, ev, cfg, exclude, exec)?;
    Ok(argmax(&scores))
}

fn argmax(scores: &[CandidateScore]) -> Option<CandidateScore> {
    let mut best: Option<CandidateScore> = None;
    for s in scores {
        match best {
            Some(b) if s.utility <= b.utility => {}
            _ => best = Some(*s),
        }
    }
    best
}

/// Root posterior restricted to its support, plus the pieces needed to update it.
struct Belief<'a> {
    net: &'a QmrNetwork,
    evidence: &'a Evidence,
    kind: UtilityKind,
    degenerate: bool,
    /// Diseases with non-zero root posterior, ascending.
    support: Vec<DiseaseId>,
    /// disease index → position in `support`.
    slot: Vec<Option<u32>>,
    probs: Vec<f64>,
}

impl<'a> Belief<'a> {
    fn new(net: &'a QmrNetwork, evidence: &'a Evidence, kind: UtilityKind) -> Self {
        let Posterior { probs, degenerate } = posterior_unchecked(net, evidence);
        let mut slot = vec![None; probs.len()];
        let mut support = Vec::new();
        let mut restricted = Vec::new();
        for (i, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                slot[i] = Some(support.len() as u32);
                support.push(DiseaseId(i));
                restricted.push(p);
            }
        }
        Self { net, evidence, kind, degenerate, support, slot, probs: restricted }
    }

    /// (slot, P(f | d)) for supported parents of `f`, ascending by slot.
    fn activation(&self, f: FindingId) -> Vec<(usize, f64)> {
        self.net
            .diseases_of(f)
            .iter()
            .filter_map(|&(d, p)| self.slot[d.index()].map(|s| (s as usize, p)))
            .collect()
    }

    /// Likelihood of answer `y` for every slot, zero-activation slots included.
    fn likelihoods(&self, act: &[(usize, f64)], y: bool) -> Vec<f64> {
        let mut lik = vec![if y { 0.0 } else { 1.0 }; self.support.len()];
        for &(s, p) in act {
            lik[s] = if y { p } else { 1.0 - p };
        }
        lik
    }

    fn divergence(&self, q: &[f64]) -> f64 {
        q.iter().zip(&self.probs).map(|(&a, &r)| term(self.kind, a, r)).sum()
    }

    /// Posterior after answer `y` and its probability, or `None` for impossible answers.
    fn branch(&self, q: &[f64], act: &[(usize, f64)], y: bool) -> Option<(f64, Vec<f64>)> {
        let lik = self.likelihoods(act, y);
        let mut child: Vec<f64> = q.iter().zip(&lik).map(|(a, l)| a * l).collect();
        let p_y: f64 = child.iter().sum();
        if p_y <= 0.0 {
            return None;
        }
        for c in &mut child {
            *c /= p_y;
        }
        Some((p_y, child))
    }

    fn value(&self, q: &[f64], path: &mut Vec<FindingId>, f: FindingId, depth: usize) -> f64 {
        if self.degenerate {
            return 0.0;
        }
        let act = self.activation(f);
        let mut total = 0.0;
        for y in [true, false] {
            let Some((p_y, child)) = self.branch(q, &act, y) else { continue };
            let v = if depth <= 1 {
                self.divergence(&child)
            } else {
                path.push(f);
                let next = self.linked_unobserved(&child, path);
                let best = if next.is_empty() {
                    self.divergence(&child)
                } else {
                    next.iter()
                        .map(|&g| self.value(&child, path, g, depth - 1))
                        .fold(f64::NEG_INFINITY, f64::max)
                };
                path.pop();
                best
            };
            total += p_y * v;
        }
        total
    }

    /// Unobserved findings with a parent still in the support of `q`. Inside the
    /// search this replaces the full candidate set: findings outside it cannot
    /// move the belief, so the maximum is unchanged.
    fn linked_unobserved(&self, q: &[f64], path: &[FindingId]) -> Vec<FindingId> {
        let mut out: Vec<FindingId> = self
            .support
            .iter()
            .zip(q)
            .filter(|(_, &p)| p > 0.0)
            .flat_map(|(&d, _)| self.net.findings_of(d).iter().map(|&(g, _)| g))
            .filter(|g| !self.evidence.is_observed(*g) && !path.contains(g))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[inline]
fn xlogx_over(x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * (x / y).ln()
    }
}

#[inline]
fn xlnx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Per-disease Bernoulli divergence of `a` (updated) from `r` (reference).
#[inline]
fn term(kind: UtilityKind, a: f64, r: f64) -> f64 {
    match kind {
        UtilityKind::Kl => xlogx_over(a, r) + xlogx_over(1.0 - a, 1.0 - r),
        UtilityKind::Ig => (xlnx(a) + xlnx(1.0 - a)) - (xlnx(r) + xlnx(1.0 - r)),
    }
}
