//! Simulated patients.
//!
//! A case draws one disease from the priors, then activates each of its
//! findings independently with the edge probability; every other finding is
//! absent. Draws without any positive finding are redrawn for the same disease,
//! so disease frequencies follow the priors exactly while finding frequencies
//! are conditioned on at least one positive. Each case has its own RNG stream
//! derived from `(seed, case_index)`, so cohorts do not depend on scheduling.

use indexmap::IndexMap;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::inference::Evidence;
use crate::network::{DiseaseId, FindingId, QmrNetwork};

/// Attempts at drawing a case with a positive finding before giving up.
pub const MAX_RESAMPLE_ATTEMPTS: usize = 10_000;

/// How the finding the patient opens with is chosen among the positives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialFinding {
    #[default]
    Uniform,
    /// The positive finding with the largest edge probability (lowest id on ties).
    MostProbable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulatedCase {
    pub true_disease: DiseaseId,
    /// State of every finding, by finding id.
    pub finding_states: Vec<bool>,
    pub initial_positive: FindingId,
}

impl SimulatedCase {
    pub fn positives(&self) -> impl Iterator<Item = FindingId> + '_ {
        self.finding_states.iter().enumerate().filter(|(_, &s)| s).map(|(i, _)| FindingId(i))
    }

    pub fn initial_evidence(&self) -> Evidence {
        Evidence::from_sets([self.initial_positive], []).expect("single finding")
    }

    /// Evidence with every finding observed.
    pub fn full_evidence(&self) -> Evidence {
        let (pos, neg): (Vec<_>, Vec<_>) = (0..self.finding_states.len()).map(FindingId).partition(|f| self.finding_states[f.index()]);
        Evidence::from_sets(pos, neg).expect("partition is disjoint")
    }
}

/// The patient's truthful answer.
pub fn patient_answer(case: &SimulatedCase, f: FindingId) -> Result<bool> {
    case.finding_states.get(f.index()).copied().ok_or(Error::UnknownFindingId(f))
}

/// RNG for case `index` of the cohort seeded with `seed`.
pub fn case_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn draw_disease(net: &QmrNetwork, rng: &mut impl Rng) -> DiseaseId {
    let dist = WeightedIndex::new(net.diseases().iter().map(|d| d.prior)).expect("priors sum to 1");
    DiseaseId(dist.sample(rng))
}

/// One unconditioned draw of all finding states given the disease.
pub fn draw_raw(net: &QmrNetwork, disease: DiseaseId, rng: &mut impl Rng) -> Vec<bool> {
    let mut states = vec![false; net.n_findings()];
    for &(f, p) in net.findings_of(disease) {
        states[f.index()] = rng.random::<f64>() < p;
    }
    states
}

pub fn sample_case(net: &QmrNetwork, rng: &mut impl Rng) -> Result<SimulatedCase> {
    sample_case_with(net, rng, InitialFinding::Uniform)
}

pub fn sample_case_with(net: &QmrNetwork, rng: &mut impl Rng, initial: InitialFinding) -> Result<SimulatedCase> {
    let disease = draw_disease(net, rng);
    for _ in 0..MAX_RESAMPLE_ATTEMPTS {
        let states = draw_raw(net, disease, rng);
        let positives: Vec<FindingId> =
            states.iter().enumerate().filter(|(_, &s)| s).map(|(i, _)| FindingId(i)).collect();
        if positives.is_empty() {
            continue;
        }
        let initial_positive = match initial {
            InitialFinding::Uniform => positives[rng.random_range(0..positives.len())],
            InitialFinding::MostProbable => {
                let mut best = positives[0];
                for &f in &positives[1..] {
                    if net.edge_prob(disease, f) > net.edge_prob(disease, best) {
                        best = f;
                    }
                }
                best
            }
        };
        return Ok(SimulatedCase { true_disease: disease, finding_states: states, initial_positive });
    }
    Err(Error::ResampleLimit { disease, attempts: MAX_RESAMPLE_ATTEMPTS })
}

/// `n` cases from independent per-case streams.
pub fn sample_cohort(
    net: &QmrNetwork,
    n: usize,
    seed: u64,
    initial: InitialFinding,
    exec: Execution,
) -> Result<Vec<SimulatedCase>> {
    exec.map_range(n, |i| sample_case_with(net, &mut case_rng(seed, i as u64), initial)).into_iter().collect()
}

/// A simulated case in the dialogue-case layout plus every finding state, so a
/// cohort can be dumped and evaluated again exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub disease: String,
    /// The opening positive finding.
    pub explicit: IndexMap<String, bool>,
    /// Findings linked to the disease, other than the opening one.
    pub implicit: IndexMap<String, bool>,
    pub all_states: IndexMap<String, bool>,
}

impl CaseRecord {
    pub fn from_case(net: &QmrNetwork, case: &SimulatedCase) -> Self {
        let name = |f: FindingId| net.finding_name(f).to_string();
        let state = |f: FindingId| case.finding_states[f.index()];
        Self {
            disease: net.disease_name(case.true_disease).to_string(),
            explicit: IndexMap::from([(name(case.initial_positive), true)]),
            implicit: net
                .findings_of(case.true_disease)
                .iter()
                .filter(|&&(f, _)| f != case.initial_positive)
                .map(|&(f, _)| (name(f), state(f)))
                .collect(),
            all_states: (0..net.n_findings()).map(FindingId).map(|f| (name(f), state(f))).collect(),
        }
    }

    /// Back to a case on `net`. Findings missing from `all_states` are absent.
    pub fn to_case(&self, net: &QmrNetwork) -> Result<SimulatedCase> {
        let true_disease = net.disease_id(&self.disease).ok_or_else(|| Error::UnknownDiseaseName(self.disease.clone()))?;
        let lookup = |n: &str| net.finding_id(n).ok_or_else(|| Error::UnknownFindingName(n.to_string()));
        let mut finding_states = vec![false; net.n_findings()];
        for (n, &v) in self.all_states.iter().chain(&self.implicit).chain(&self.explicit) {
            finding_states[lookup(n)?.index()] = v;
        }
        let initial_positive = self
            .explicit
            .iter()
            .find(|(_, &v)| v)
            .map(|(n, _)| lookup(n))
            .transpose()?
            .ok_or_else(|| Error::InfeasibleParameters(format!("case for {} has no explicit positive finding", self.disease)))?;
        Ok(SimulatedCase { true_disease, finding_states, initial_positive })
    }
}
