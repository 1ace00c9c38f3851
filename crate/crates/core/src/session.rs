//! One diagnosis episode as a state machine.
//!
//! ```text
//! loop:
//!     step == max_steps            -> Diagnose(budget)
//!     no candidate left            -> Diagnose(exhausted)
//!     best utility < threshold     -> Diagnose(threshold)
//!     otherwise                    -> Suggest(finding), wait for the answer
//! ```
//!
//! Answers (including skips) consume a step. Overrides set or clear any finding
//! at any time without consuming one. Every mutation is appended to a transcript
//! from which the session can be replayed exactly.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::inference::{posterior_unchecked, top_k, Evidence, Posterior};
use crate::inquiry::{select_next_with, CandidateScore, LookaheadConfig};
use crate::network::{DiseaseId, FindingId, QmrNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub max_steps: usize,
    /// Nats. Inquiry stops once the best utility falls strictly below this.
    pub utility_threshold: f64,
    pub lookahead: LookaheadConfig,
    pub top_k: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self { max_steps: 20, utility_threshold: 0.01, lookahead: LookaheadConfig::default(), top_k: 5 }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.utility_threshold.is_finite() && self.utility_threshold >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "utility threshold must be a non-negative number, got {}",
                self.utility_threshold
            )));
        }
        if self.lookahead.depth == 0 {
            return Err(Error::InvalidConfig("lookahead depth must be at least 1".into()));
        }
        if self.top_k == 0 {
            return Err(Error::InvalidConfig("top_k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopReason {
    Budget,
    Threshold,
    Exhausted,
    /// The user asked for a diagnosis.
    Manual,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Budget => "budget",
            StopReason::Threshold => "threshold",
            StopReason::Exhausted => "exhausted",
            StopReason::Manual => "manual",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Decision {
    Suggest(CandidateScore),
    Diagnose { reason: StopReason },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Active,
    Diagnosed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedDisease {
    pub disease: DiseaseId,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub ranked: Vec<RankedDisease>,
    pub posterior: Posterior,
    pub reason: StopReason,
    pub steps: usize,
}

/// One line of a session transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "lowercase")]
pub enum TranscriptEvent {
    Suggest { step: usize, finding: FindingId, utility: f64 },
    /// `value: null` means the question was skipped.
    Answer { step: usize, finding: FindingId, value: Option<bool> },
    /// `value: null` clears the finding.
    Override { step: usize, finding: FindingId, value: Option<bool> },
    Final { step: usize, reason: StopReason, ranked: Vec<RankedDisease>, degenerate: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub config: SessionConfig,
    pub evidence: Evidence,
    pub step: usize,
    pub status: Status,
    /// Decision for the current evidence, if already computed.
    pub pending: Option<Decision>,
    pub last_suggestion: Option<CandidateScore>,
    /// Skipped questions; never suggested again unless their state is set.
    pub declined: BTreeSet<FindingId>,
    pub diagnosis: Option<Diagnosis>,
    pub transcript: Vec<TranscriptEvent>,
}

/// A [`SessionState`] bound to its network.
#[derive(Debug, Clone)]
pub struct Session<'n> {
    net: &'n QmrNetwork,
    state: SessionState,
    exec: Execution,
}

impl<'n> Session<'n> {
    /// Start at step 0 with `initial` evidence, recorded as overrides.
    pub fn create(net: &'n QmrNetwork, config: SessionConfig, initial: Evidence) -> Result<Self> {
        config.validate()?;
        initial.validate_for(net)?;
        let transcript = initial
            .positive()
            .iter()
            .map(|&f| (f, true))
            .chain(initial.negative().iter().map(|&f| (f, false)))
            .map(|(finding, v)| TranscriptEvent::Override { step: 0, finding, value: Some(v) })
            .collect();
        let state = SessionState {
            config,
            evidence: initial,
            step: 0,
            status: Status::Active,
            pending: None,
            last_suggestion: None,
            declined: BTreeSet::new(),
            diagnosis: None,
            transcript,
        };
        Ok(Self { net, state, exec: Execution::default() })
    }

    /// Re-attach a stored state to its network.
    pub fn resume(net: &'n QmrNetwork, state: SessionState) -> Result<Self> {
        state.config.validate()?;
        state.evidence.validate_for(net)?;
        if let Some(&f) = state.declined.iter().find(|f| !net.contains_finding(**f)) {
            return Err(Error::UnknownFindingId(f));
        }
        Ok(Self { net, state, exec: Execution::default() })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn network(&self) -> &'n QmrNetwork {
        self.net
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn into_state(self) -> SessionState {
        self.state
    }

    pub fn evidence(&self) -> &Evidence {
        &self.state.evidence
    }

    pub fn step(&self) -> usize {
        self.state.step
    }

    pub fn is_active(&self) -> bool {
        self.state.status == Status::Active
    }

    pub fn transcript(&self) -> &[TranscriptEvent] {
        &self.state.transcript
    }

    pub fn posterior(&self) -> Posterior {
        posterior_unchecked(self.net, &self.state.evidence)
    }

    fn ensure_active(&self) -> Result<()> {
        if self.is_active() {
            Ok(())
        } else {
            Err(Error::SessionClosed)
        }
    }

    fn check_finding(&self, f: FindingId) -> Result<()> {
        if self.net.contains_finding(f) {
            Ok(())
        } else {
            Err(Error::UnknownFindingId(f))
        }
    }

    /// What to do next at the current evidence. Idempotent until the next mutation.
    pub fn next_suggestion(&mut self) -> Result<Decision> {
        self.ensure_active()?;
        if let Some(d) = self.state.pending {
            return Ok(d);
        }
        let cfg = &self.state.config;
        let decision = if self.state.step >= cfg.max_steps {
            Decision::Diagnose { reason: StopReason::Budget }
        } else {
            match select_next_with(self.net, &self.state.evidence, cfg.lookahead, &self.state.declined, self.exec)? {
                None => Decision::Diagnose { reason: StopReason::Exhausted },
                Some(s) if s.utility < cfg.utility_threshold => Decision::Diagnose { reason: StopReason::Threshold },
                Some(s) => Decision::Suggest(s),
            }
        };
        if let Decision::Suggest(s) = decision {
            self.state.last_suggestion = Some(s);
            self.state.transcript.push(TranscriptEvent::Suggest {
                step: self.state.step,
                finding: s.finding,
                utility: s.utility,
            });
        }
        self.state.pending = Some(decision);
        Ok(decision)
    }

    fn ensure_budget(&self) -> Result<()> {
        let max_steps = self.state.config.max_steps;
        if self.state.step >= max_steps {
            Err(Error::BudgetExhausted { max_steps })
        } else {
            Ok(())
        }
    }

    /// Record the answer to a question (suggested or not); consumes a step.
    pub fn answer(&mut self, f: FindingId, value: bool) -> Result<()> {
        self.ensure_active()?;
        self.check_finding(f)?;
        self.ensure_budget()?;
        self.state.evidence.observe(f, value)?;
        self.state.declined.remove(&f);
        self.record_answer(f, Some(value));
        Ok(())
    }

    /// Decline to answer; the finding stays unknown and is not asked again.
    pub fn skip(&mut self, f: FindingId) -> Result<()> {
        self.ensure_active()?;
        self.check_finding(f)?;
        self.ensure_budget()?;
        if self.state.evidence.is_observed(f) {
            return Err(Error::AlreadyObserved(f));
        }
        self.state.declined.insert(f);
        self.record_answer(f, None);
        Ok(())
    }

    fn record_answer(&mut self, finding: FindingId, value: Option<bool>) {
        self.state.transcript.push(TranscriptEvent::Answer { step: self.state.step, finding, value });
        self.state.step += 1;
        self.state.pending = None;
    }

    /// Set (`Some`) or clear (`None`) a finding without consuming a step.
    pub fn override_finding(&mut self, f: FindingId, value: Option<bool>) -> Result<()> {
        self.ensure_active()?;
        self.check_finding(f)?;
        self.state.evidence.set(f, value);
        if value.is_some() {
            self.state.declined.remove(&f);
        }
        self.state.transcript.push(TranscriptEvent::Override { step: self.state.step, finding: f, value });
        self.state.pending = None;
        Ok(())
    }

    /// Close the session with a ranked diagnosis. The stop reason is the pending
    /// decision's if inquiry had ended, otherwise [`StopReason::Manual`].
    pub fn finalize(&mut self) -> Result<&Diagnosis> {
        self.ensure_active()?;
        let reason = match self.state.pending {
            Some(Decision::Diagnose { reason }) => reason,
            _ => StopReason::Manual,
        };
        let post = self.posterior();
        let k = self.state.config.top_k.min(post.len());
        let ranked: Vec<RankedDisease> =
            top_k(&post, k)?.into_iter().map(|(disease, prob)| RankedDisease { disease, prob }).collect();
        self.state.transcript.push(TranscriptEvent::Final {
            step: self.state.step,
            reason,
            ranked: ranked.clone(),
            degenerate: post.degenerate,
        });
        self.state.status = Status::Diagnosed;
        self.state.pending = None;
        Ok(self.state.diagnosis.insert(Diagnosis { ranked, posterior: post, reason, steps: self.state.step }))
    }

    pub fn diagnosis(&self) -> Option<&Diagnosis> {
        self.state.diagnosis.as_ref()
    }

    /// Follow suggestions with `oracle` answering, then finalize. `None` from the
    /// oracle skips the question.
    pub fn run_to_completion(&mut self, mut oracle: impl FnMut(FindingId) -> Option<bool>) -> Result<&Diagnosis> {
        loop {
            match self.next_suggestion()? {
                Decision::Suggest(s) => match oracle(s.finding) {
                    Some(v) => self.answer(s.finding, v)?,
                    None => self.skip(s.finding)?,
                },
                Decision::Diagnose { .. } => return self.finalize(),
            }
        }
    }

    /// Rebuild a session from its transcript, checking that every recorded
    /// suggestion and the final ranking come out bit-identical.
    pub fn replay(net: &'n QmrNetwork, config: SessionConfig, events: &[TranscriptEvent]) -> Result<Self> {
        let mut s = Self::create(net, config, Evidence::new())?;
        s.state.transcript.clear();
        for (i, ev) in events.iter().enumerate() {
            let mismatch = |what: String| Error::TranscriptMismatch(format!("event {i}: {what}"));
            match ev {
                TranscriptEvent::Override { finding, value, .. } => s.override_finding(*finding, *value)?,
                TranscriptEvent::Answer { finding, value: Some(v), .. } => s.answer(*finding, *v)?,
                TranscriptEvent::Answer { finding, value: None, .. } => s.skip(*finding)?,
                TranscriptEvent::Suggest { finding, utility, .. } => match s.next_suggestion()? {
                    Decision::Suggest(got) if got.finding == *finding && got.utility.to_bits() == utility.to_bits() => {}
                    other => return Err(mismatch(format!("expected suggestion {finding} ({utility}), got {other:?}"))),
                },
                TranscriptEvent::Final { reason, ranked, degenerate, .. } => {
                    if *reason != StopReason::Manual {
                        match s.next_suggestion()? {
                            Decision::Diagnose { reason: r } if r == *reason => {}
                            other => return Err(mismatch(format!("expected stop ({reason}), got {other:?}"))),
                        }
                    }
                    let d = s.finalize()?;
                    let same = d.ranked.len() == ranked.len()
                        && d.ranked.iter().zip(ranked).all(|(a, b)| a.disease == b.disease && a.prob.to_bits() == b.prob.to_bits());
                    if !same || d.posterior.degenerate != *degenerate {
                        return Err(mismatch("final ranking differs".into()));
                    }
                }
            }
        }
        Ok(s)
    }
}

/// Write events as JSON lines.
pub fn write_transcript(mut w: impl Write, events: &[TranscriptEvent]) -> std::io::Result<()> {
    for ev in events {
        serde_json::to_writer(&mut w, ev)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Read JSON-lines events, ignoring blank lines.
pub fn read_transcript(r: impl BufRead) -> Result<Vec<TranscriptEvent>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|source| Error::Io { path: "<transcript>".into(), source })?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
