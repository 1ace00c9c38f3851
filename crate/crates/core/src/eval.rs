//! Episode runner, accuracy metrics, cheater baseline and grid search.
//!
//! Reports aggregate integer hit counts, so they are identical for any worker
//! count. Accuracy intervals are 95% Wilson score intervals.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::inference::{posterior_unchecked, Evidence};
use crate::io::DialogueCase;
use crate::network::{DiseaseId, FindingId, QmrNetwork};
use crate::session::{Session, SessionConfig, StopReason};
use crate::simulator::{patient_answer, sample_cohort, InitialFinding, SimulatedCase};

/// Answer given in dialogue evaluation when the case does not record the finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnrecordedAnswer {
    #[default]
    Absent,
    Skip,
}

impl FromStr for UnrecordedAnswer {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "absent" => Ok(Self::Absent),
            "skip" => Ok(Self::Skip),
            other => Err(format!("unknown unrecorded-answer mode {other:?} (expected absent or skip)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub exec: Execution,
    pub initial: InitialFinding,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { exec: Execution::default(), initial: InitialFinding::Uniform }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    /// `None` when a dialogue case names a disease the network lacks.
    pub true_disease: Option<DiseaseId>,
    /// Top of the final ranking (`top_k` entries).
    pub ranked: Vec<DiseaseId>,
    /// Zero-based position of the true disease in the full ranking.
    pub rank: Option<usize>,
    pub steps: usize,
    pub degenerate: bool,
    pub reason: Option<StopReason>,
}

impl EpisodeResult {
    pub fn hit(&self, k: usize) -> bool {
        self.rank.is_some_and(|r| r < k)
    }

    fn missing(&self) -> bool {
        self.true_disease.is_none()
    }
}

/// Drive a session on a simulated patient until it diagnoses.
pub fn run_episode(net: &QmrNetwork, cfg: &SessionConfig, case: &SimulatedCase, exec: Execution) -> Result<EpisodeResult> {
    let mut s = Session::create(net, *cfg, case.initial_evidence())?.with_execution(exec);
    let mut failure = None;
    let d = s.run_to_completion(|f| match patient_answer(case, f) {
        Ok(v) => Some(v),
        Err(e) => {
            failure.get_or_insert(e);
            None
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(EpisodeResult {
        true_disease: Some(case.true_disease),
        ranked: d.ranked.iter().map(|r| r.disease).collect(),
        rank: Some(d.posterior.rank_of(case.true_disease)),
        steps: d.steps,
        degenerate: d.posterior.degenerate,
        reason: Some(d.reason),
    })
}

/// Drive a session on a recorded dialogue case. Explicit findings known to the
/// network form the initial evidence; questions are answered from the implicit
/// findings, or per `unrecorded` when the case is silent.
pub fn run_dialogue_episode(
    net: &QmrNetwork,
    cfg: &SessionConfig,
    case: &DialogueCase,
    unrecorded: UnrecordedAnswer,
    exec: Execution,
) -> Result<EpisodeResult> {
    let Some(truth) = net.disease_id(&case.disease_name) else {
        return Ok(EpisodeResult {
            true_disease: None,
            ranked: Vec::new(),
            rank: None,
            steps: 0,
            degenerate: false,
            reason: None,
        });
    };
    let known = |(name, &v): (&String, &bool)| net.finding_id(name).map(|f| (f, v));
    let explicit: Vec<(FindingId, bool)> = case.explicit.iter().filter_map(known).collect();
    let initial = Evidence::from_sets(
        explicit.iter().filter(|(_, v)| *v).map(|(f, _)| *f),
        explicit.iter().filter(|(_, v)| !*v).map(|(f, _)| *f),
    )?;
    let mut s = Session::create(net, *cfg, initial)?.with_execution(exec);
    let d = s.run_to_completion(|f| match case.implicit.get(net.finding_name(f)) {
        Some(&v) => Some(v),
        None => match unrecorded {
            UnrecordedAnswer::Absent => Some(false),
            UnrecordedAnswer::Skip => None,
        },
    })?;
    Ok(EpisodeResult {
        true_disease: Some(truth),
        ranked: d.ranked.iter().map(|r| r.disease).collect(),
        rank: Some(d.posterior.rank_of(truth)),
        steps: d.steps,
        degenerate: d.posterior.degenerate,
        reason: Some(d.reason),
    })
}

/// Inference with every finding of the case observed; no questions asked.
pub fn cheater_episode(net: &QmrNetwork, case: &SimulatedCase, top_k: usize) -> EpisodeResult {
    let post = posterior_unchecked(net, &case.full_evidence());
    EpisodeResult {
        true_disease: Some(case.true_disease),
        ranked: post.ranking().into_iter().take(top_k).map(|(d, _)| d).collect(),
        rank: Some(post.rank_of(case.true_disease)),
        steps: 0,
        degenerate: post.degenerate,
        reason: None,
    }
}

/// Accuracy with its 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub hits: usize,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Rate {
    pub fn new(hits: usize, n: usize) -> Self {
        let (ci_low, ci_high) = wilson_interval(hits, n, 1.959_963_984_540_054);
        Self { hits, value: if n == 0 { 0.0 } else { hits as f64 / n as f64 }, ci_low, ci_high }
    }
}

/// Wilson score interval for `hits` successes out of `n`.
pub fn wilson_interval(hits: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `None` for the cheater baseline, which asks nothing.
    pub config: Option<SessionConfig>,
    pub seed: Option<u64>,
    pub n_cases: usize,
    pub top1: Rate,
    pub top3: Rate,
    pub top5: Rate,
    pub total_steps: usize,
    pub avg_steps: f64,
    pub degenerate: usize,
    /// Dialogue cases whose disease is not in the network (scored as misses).
    pub missing_disease: usize,
}

impl EvalReport {
    pub fn from_episodes(config: Option<SessionConfig>, seed: Option<u64>, episodes: &[EpisodeResult]) -> Self {
        let n = episodes.len();
        let hits = |k| episodes.iter().filter(|e| e.hit(k)).count();
        let total_steps: usize = episodes.iter().map(|e| e.steps).sum();
        Self {
            config,
            seed,
            n_cases: n,
            top1: Rate::new(hits(1), n),
            top3: Rate::new(hits(3), n),
            top5: Rate::new(hits(5), n),
            total_steps,
            avg_steps: if n == 0 { 0.0 } else { total_steps as f64 / n as f64 },
            degenerate: episodes.iter().filter(|e| e.degenerate).count(),
            missing_disease: episodes.iter().filter(|e| e.missing()).count(),
        }
    }

    /// Violated report invariants, empty when all hold.
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.top1.hits <= self.top3.hits && self.top3.hits <= self.top5.hits) {
            out.push(format!(
                "top-k not nested: top1 {} top3 {} top5 {}",
                self.top1.hits, self.top3.hits, self.top5.hits
            ));
        }
        if let Some(cfg) = &self.config {
            if self.total_steps > cfg.max_steps * self.n_cases {
                out.push(format!("average steps {} exceed the budget {}", self.avg_steps, cfg.max_steps));
            }
        }
        out
    }
}

/// Mean and standard error of per-case hit differences `a - b` at top-k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedDifference {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

pub fn paired_difference(a: &[EpisodeResult], b: &[EpisodeResult], k: usize) -> PairedDifference {
    assert_eq!(a.len(), b.len(), "paired comparison needs matched cohorts");
    let n = a.len();
    if n == 0 {
        return PairedDifference { mean: 0.0, se: 0.0, n };
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.hit(k) as i32 as f64 - y.hit(k) as i32 as f64).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 { diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    PairedDifference { mean, se: (var / n as f64).sqrt(), n }
}

fn cohort(net: &QmrNetwork, n_cases: usize, seed: u64, opts: &EvalOptions) -> Result<Vec<SimulatedCase>> {
    if n_cases == 0 {
        return Err(Error::InfeasibleParameters("need at least one case".into()));
    }
    sample_cohort(net, n_cases, seed, opts.initial, opts.exec)
}

/// Episodes over a given cohort, in cohort order. Cases run in parallel; each
/// episode scores its candidates sequentially.
pub fn run_episodes(net: &QmrNetwork, cfg: &SessionConfig, cases: &[SimulatedCase], exec: Execution) -> Result<Vec<EpisodeResult>> {
    exec.map(cases, |c| run_episode(net, cfg, c, Execution::Sequential)).into_iter().collect()
}

pub fn evaluate(net: &QmrNetwork, cfg: &SessionConfig, n_cases: usize, seed: u64) -> Result<EvalReport> {
    evaluate_with(net, cfg, n_cases, seed, &EvalOptions::default())
}

pub fn evaluate_with(net: &QmrNetwork, cfg: &SessionConfig, n_cases: usize, seed: u64, opts: &EvalOptions) -> Result<EvalReport> {
    let (report, _) = evaluate_detailed(net, cfg, n_cases, seed, opts)?;
    Ok(report)
}

pub fn evaluate_detailed(
    net: &QmrNetwork,
    cfg: &SessionConfig,
    n_cases: usize,
    seed: u64,
    opts: &EvalOptions,
) -> Result<(EvalReport, Vec<EpisodeResult>)> {
    cfg.validate()?;
    let cases = cohort(net, n_cases, seed, opts)?;
    let episodes = run_episodes(net, cfg, &cases, opts.exec)?;
    Ok((EvalReport::from_episodes(Some(*cfg), Some(seed), &episodes), episodes))
}

/// Evaluate a fixed cohort (for instance one loaded from a case dump).
pub fn evaluate_cases(net: &QmrNetwork, cfg: &SessionConfig, cases: &[SimulatedCase], exec: Execution) -> Result<EvalReport> {
    cfg.validate()?;
    let episodes = run_episodes(net, cfg, cases, exec)?;
    Ok(EvalReport::from_episodes(Some(*cfg), None, &episodes))
}

pub fn cheater_evaluate(net: &QmrNetwork, n_cases: usize, seed: u64) -> Result<EvalReport> {
    let (report, _) = cheater_detailed(net, n_cases, seed, &EvalOptions::default())?;
    Ok(report)
}

pub fn cheater_detailed(net: &QmrNetwork, n_cases: usize, seed: u64, opts: &EvalOptions) -> Result<(EvalReport, Vec<EpisodeResult>)> {
    let cases = cohort(net, n_cases, seed, opts)?;
    let episodes = opts.exec.map(&cases, |c| cheater_episode(net, c, 5));
    Ok((EvalReport::from_episodes(None, Some(seed), &episodes), episodes))
}

/// One report per (threshold, max_steps) pair, thresholds outermost, all on the
/// same cohort.
pub fn grid_search(
    net: &QmrNetwork,
    base: &SessionConfig,
    thresholds: &[f64],
    max_steps: &[usize],
    n_cases: usize,
    seed: u64,
    opts: &EvalOptions,
) -> Result<Vec<EvalReport>> {
    if thresholds.is_empty() || max_steps.is_empty() {
        return Err(Error::InfeasibleParameters("grid needs at least one threshold and one step budget".into()));
    }
    let cases = cohort(net, n_cases, seed, opts)?;
    let mut reports = Vec::with_capacity(thresholds.len() * max_steps.len());
    for &t in thresholds {
        for &m in max_steps {
            let cfg = SessionConfig { utility_threshold: t, max_steps: m, ..*base };
            cfg.validate()?;
            let episodes = run_episodes(net, &cfg, &cases, opts.exec)?;
            reports.push(EvalReport::from_episodes(Some(cfg), Some(seed), &episodes));
        }
    }
    Ok(reports)
}

pub fn evaluate_dialogue(
    net: &QmrNetwork,
    cases: &[DialogueCase],
    cfg: &SessionConfig,
    unrecorded: UnrecordedAnswer,
    exec: Execution,
) -> Result<(EvalReport, Vec<EpisodeResult>)> {
    cfg.validate()?;
    if cases.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let episodes: Vec<EpisodeResult> = exec
        .map(cases, |c| run_dialogue_episode(net, cfg, c, unrecorded, Execution::Sequential))
        .into_iter()
        .collect::<Result<_>>()?;
    Ok((EvalReport::from_episodes(Some(*cfg), None, &episodes), episodes))
}

pub const CSV_HEADER: [&str; 10] = ["threshold", "max_steps", "depth", "utility", "top1", "top3", "top5", "avg_steps", "n", "seed"];

/// Reports as CSV with [`CSV_HEADER`]; the cheater baseline leaves the config columns empty.
pub fn write_csv(reports: &[EvalReport], w: impl std::io::Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let io_err = |e: csv::Error| Error::Io { path: "<csv>".into(), source: e.into() };
    out.write_record(CSV_HEADER).map_err(io_err)?;
    for r in reports {
        let (t, m, d, u) = match &r.config {
            Some(c) => (
                c.utility_threshold.to_string(),
                c.max_steps.to_string(),
                c.lookahead.depth.to_string(),
                c.lookahead.utility.to_string(),
            ),
            None => Default::default(),
        };
        out.write_record([
            t,
            m,
            d,
            u,
            format!("{:.4}", r.top1.value),
            format!("{:.4}", r.top3.value),
            format!("{:.4}", r.top5.value),
            format!("{:.3}", r.avg_steps),
            r.n_cases.to_string(),
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
        ])
        .map_err(io_err)?;
    }
    out.flush().map_err(|source| Error::Io { path: "<csv>".into(), source })?;
    Ok(())
}

/// Fixed-width table in percent, one row per report.
pub fn format_table(reports: &[EvalReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:>9} {:>9} {:>5} {:>7} {:>7} {:>7} {:>7} {:>7}", "Threshold", "Max steps", "Depth", "Utility", "Top1", "Top3", "Top5", "Steps");
    for r in reports {
        let (t, m, d, u) = match &r.config {
            Some(c) => (
                format!("{:.2}", c.utility_threshold),
                c.max_steps.to_string(),
                c.lookahead.depth.to_string(),
                c.lookahead.utility.to_string().to_uppercase(),
            ),
            None => ("-".into(), "all".into(), "-".into(), "cheat".into()),
        };
        let _ = writeln!(
            s,
            "{t:>9} {m:>9} {d:>5} {u:>7} {:>7.2} {:>7.2} {:>7.2} {:>7.2}",
            100.0 * r.top1.value,
            100.0 * r.top3.value,
            100.0 * r.top5.value,
            r.avg_steps
        );
    }
    s
}
