//! The bipartite disease → finding belief network.
//!
//! Diseases carry a categorical prior (one disease per case, priors sum to 1).
//! Each edge carries the probability that the disease alone activates the
//! finding; several present parents combine through a noisy-OR gate with no
//! leak, so a finding without an edge from the active disease is always absent.
//!
//! Ids are dense and assigned in file order. Every tie-break elsewhere in the
//! crate refers to these ids.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

/// Tolerance on the sum of disease priors.
pub const PRIOR_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DiseaseId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FindingId(pub usize);

impl DiseaseId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl FindingId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for DiseaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{}", self.0)
    }
}

impl fmt::Display for FindingId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Disease {
    pub id: DiseaseId,
    pub name: String,
    /// Marginal probability that this is the patient's disease.
    pub prior: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub id: FindingId,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub disease: DiseaseId,
    pub finding: FindingId,
    /// P(finding present | disease present), in (0, 1].
    pub prob: f64,
}

/// Name-level description of a network; this is also the native JSON format.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub diseases: Vec<DiseaseSpec>,
    pub findings: Vec<FindingSpec>,
    pub edges: Vec<EdgeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiseaseSpec {
    pub name: String,
    pub prior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindingSpec {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub disease: String,
    pub finding: String,
    pub prob: f64,
}

/// Check every network invariant and report all violations found.
pub fn validate(spec: &NetworkSpec) -> std::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if spec.diseases.is_empty() {
        out.push(Violation::NoDiseases);
    }

    let mut disease_names = HashSet::new();
    let mut prior_sum = 0.0;
    for (i, d) in spec.diseases.iter().enumerate() {
        let name = d.name.trim();
        if name.is_empty() {
            out.push(Violation::EmptyName { kind: "disease", index: i });
        } else if !disease_names.insert(name) {
            out.push(Violation::DuplicateDisease(name.to_string()));
        }
        if !(0.0..=1.0).contains(&d.prior) {
            out.push(Violation::PriorOutOfRange { disease: name.to_string(), prior: d.prior });
        }
        prior_sum += d.prior;
    }
    if !spec.diseases.is_empty() && !((prior_sum - 1.0).abs() <= PRIOR_SUM_TOLERANCE) {
        out.push(Violation::PriorSum(prior_sum));
    }

    let mut finding_names = HashSet::new();
    for (i, f) in spec.findings.iter().enumerate() {
        let name = f.name.trim();
        if name.is_empty() {
            out.push(Violation::EmptyName { kind: "finding", index: i });
        } else if !finding_names.insert(name) {
            out.push(Violation::DuplicateFinding(name.to_string()));
        }
    }

    let mut seen_edges = HashSet::new();
    for (i, e) in spec.edges.iter().enumerate() {
        let disease = e.disease.trim();
        let finding = e.finding.trim();
        if !disease_names.contains(disease) {
            out.push(Violation::UnknownDisease { edge: i, name: disease.to_string() });
        }
        if !finding_names.contains(finding) {
            out.push(Violation::UnknownFinding { edge: i, name: finding.to_string() });
        }
        if !(e.prob > 0.0 && e.prob <= 1.0) {
            out.push(Violation::EdgeProbOutOfRange {
                disease: disease.to_string(),
                finding: finding.to_string(),
                prob: e.prob,
            });
        }
        if !seen_edges.insert((disease, finding)) {
            out.push(Violation::DuplicateEdge {
                disease: disease.to_string(),
                finding: finding.to_string(),
            });
        }
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// An immutable, validated QMR-style belief network with both adjacency indexes.
#[derive(Debug, Clone, PartialEq)]
pub struct QmrNetwork {
    diseases: Vec<Disease>,
    findings: Vec<Finding>,
    edges: Vec<Edge>,
    /// disease → (finding, prob), sorted by finding id.
    disease_findings: Vec<Vec<(FindingId, f64)>>,
    /// finding → (disease, prob), sorted by disease id.
    finding_diseases: Vec<Vec<(DiseaseId, f64)>>,
    disease_by_name: HashMap<String, DiseaseId>,
    finding_by_name: HashMap<String, FindingId>,
}

impl QmrNetwork {
    pub fn from_spec(spec: &NetworkSpec) -> Result<Self> {
        validate(spec).map_err(Error::InvalidNetwork)?;

        let diseases: Vec<Disease> = spec
            .diseases
            .iter()
            .enumerate()
            .map(|(i, d)| Disease { id: DiseaseId(i), name: d.name.trim().to_string(), prior: d.prior })
            .collect();
        let findings: Vec<Finding> = spec
            .findings
            .iter()
            .enumerate()
            .map(|(i, f)| Finding { id: FindingId(i), name: f.name.trim().to_string() })
            .collect();
        let disease_by_name: HashMap<_, _> =
            diseases.iter().map(|d| (d.name.clone(), d.id)).collect();
        let finding_by_name: HashMap<_, _> =
            findings.iter().map(|f| (f.name.clone(), f.id)).collect();

        let edges: Vec<Edge> = spec
            .edges
            .iter()
            .map(|e| Edge {
                disease: disease_by_name[e.disease.trim()],
                finding: finding_by_name[e.finding.trim()],
                prob: e.prob,
            })
            .collect();

        let mut disease_findings = vec![Vec::new(); diseases.len()];
        let mut finding_diseases = vec![Vec::new(); findings.len()];
        for e in &edges {
            disease_findings[e.disease.index()].push((e.finding, e.prob));
            finding_diseases[e.finding.index()].push((e.disease, e.prob));
        }
        for list in &mut disease_findings {
            list.sort_by_key(|&(f, _)| f);
        }
        for list in &mut finding_diseases {
            list.sort_by_key(|&(d, _)| d);
        }

        Ok(Self {
            diseases,
            findings,
            edges,
            disease_findings,
            finding_diseases,
            disease_by_name,
            finding_by_name,
        })
    }

    pub fn to_spec(&self) -> NetworkSpec {
        NetworkSpec {
            diseases: self
                .diseases
                .iter()
                .map(|d| DiseaseSpec { name: d.name.clone(), prior: d.prior })
                .collect(),
            findings: self.findings.iter().map(|f| FindingSpec { name: f.name.clone() }).collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeSpec {
                    disease: self.diseases[e.disease.index()].name.clone(),
                    finding: self.findings[e.finding.index()].name.clone(),
                    prob: e.prob,
                })
                .collect(),
        }
    }

    pub fn diseases(&self) -> &[Disease] {
        &self.diseases
    }

    pub fn findings(&self) -> &[Finding] {
        &self.findings
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn n_diseases(&self) -> usize {
        self.diseases.len()
    }

    pub fn n_findings(&self) -> usize {
        self.findings.len()
    }

    pub fn disease(&self, id: DiseaseId) -> Result<&Disease> {
        self.diseases.get(id.index()).ok_or(Error::UnknownDiseaseId(id))
    }

    pub fn finding(&self, id: FindingId) -> Result<&Finding> {
        self.findings.get(id.index()).ok_or(Error::UnknownFindingId(id))
    }

    pub fn disease_name(&self, id: DiseaseId) -> &str {
        &self.diseases[id.index()].name
    }

    pub fn finding_name(&self, id: FindingId) -> &str {
        &self.findings[id.index()].name
    }

    pub fn prior(&self, id: DiseaseId) -> f64 {
        self.diseases[id.index()].prior
    }

    pub fn priors(&self) -> Vec<f64> {
        self.diseases.iter().map(|d| d.prior).collect()
    }

    pub fn contains_finding(&self, id: FindingId) -> bool {
        id.index() < self.findings.len()
    }

    /// Exact match after trimming surrounding whitespace.
    pub fn finding_id(&self, name: &str) -> Option<FindingId> {
        self.finding_by_name.get(name.trim()).copied()
    }

    pub fn disease_id(&self, name: &str) -> Option<DiseaseId> {
        self.disease_by_name.get(name.trim()).copied()
    }

    /// Findings the disease can activate, sorted by finding id.
    pub fn findings_of(&self, disease: DiseaseId) -> &[(FindingId, f64)] {
        &self.disease_findings[disease.index()]
    }

    /// Diseases that can activate the finding, sorted by disease id.
    pub fn diseases_of(&self, finding: FindingId) -> &[(DiseaseId, f64)] {
        &self.finding_diseases[finding.index()]
    }

    /// P(finding | disease), zero when there is no edge.
    pub fn edge_prob(&self, disease: DiseaseId, finding: FindingId) -> f64 {
        let list = &self.disease_findings[disease.index()];
        match list.binary_search_by_key(&finding, |&(f, _)| f) {
            Ok(pos) => list[pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn stats(&self) -> NetworkStats {
        let connected = self.finding_diseases.iter().filter(|l| !l.is_empty()).count();
        let n_edges = self.edges.len();
        NetworkStats {
            n_diseases: self.diseases.len(),
            n_findings: self.findings.len(),
            n_edges,
            isolated_findings: self.findings.len() - connected,
            findings_per_disease: n_edges as f64 / self.diseases.len() as f64,
            diseases_per_finding: if connected == 0 { 0.0 } else { n_edges as f64 / connected as f64 },
        }
    }
}

/// Shape statistics in the same terms used to characterise benchmark datasets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NetworkStats {
    pub n_diseases: usize,
    pub n_findings: usize,
    pub n_edges: usize,
    pub isolated_findings: usize,
    pub findings_per_disease: f64,
    /// Averaged over findings with at least one parent.
    pub diseases_per_finding: f64,
}

/// Incremental construction of a [`NetworkSpec`], mostly for tests and generators.
#[derive(Debug, Default, Clone)]
pub struct NetworkBuilder {
    spec: NetworkSpec,
}

impl NetworkBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn disease(mut self, name: impl Into<String>, prior: f64) -> Self {
        self.spec.diseases.push(DiseaseSpec { name: name.into(), prior });
        self
    }

    pub fn finding(mut self, name: impl Into<String>) -> Self {
        self.spec.findings.push(FindingSpec { name: name.into() });
        self
    }

    pub fn edge(mut self, disease: impl Into<String>, finding: impl Into<String>, prob: f64) -> Self {
        self.spec.edges.push(EdgeSpec { disease: disease.into(), finding: finding.into(), prob });
        self
    }

    pub fn spec(self) -> NetworkSpec {
        self.spec
    }

    pub fn build(self) -> Result<QmrNetwork> {
        QmrNetwork::from_spec(&self.spec)
    }
}
