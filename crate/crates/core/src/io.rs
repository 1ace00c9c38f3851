//! Network and case-corpus file formats.
//!
//! * native: `{"diseases":[{"name","prior"}],"findings":[{"name"}],"edges":[{"disease","finding","prob"}]}`
//! * symcat-style: `{disease: [[finding, prob], ...], ...}` with implied uniform priors
//! * dialogue cases: `[{"disease", "explicit": {finding: bool}, "implicit": {finding: bool}}]`

use std::fs;
use std::path::Path;
use std::str::FromStr;

use indexmap::{IndexMap, IndexSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{DiseaseSpec, EdgeSpec, FindingSpec, NetworkSpec, QmrNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NetworkFormat {
    #[default]
    Native,
    Symcat,
}

impl FromStr for NetworkFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "native" => Ok(Self::Native),
            "symcat" | "symcat-style" => Ok(Self::Symcat),
            other => Err(format!("unknown network format {other:?} (expected native or symcat)")),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

/// Parse a network description without validating it.
pub fn parse_network_spec(text: &str, format: NetworkFormat) -> Result<NetworkSpec> {
    match format {
        NetworkFormat::Native => Ok(serde_json::from_str(text)?),
        NetworkFormat::Symcat => {
            let raw: IndexMap<String, Vec<(String, f64)>> = serde_json::from_str(text)?;
            Ok(symcat_to_spec(&raw))
        }
    }
}

fn symcat_to_spec(raw: &IndexMap<String, Vec<(String, f64)>>) -> NetworkSpec {
    let prior = 1.0 / raw.len() as f64;
    let mut findings = IndexSet::new();
    let mut edges = Vec::new();
    for (disease, list) in raw {
        for (finding, prob) in list {
            findings.insert(finding.trim().to_string());
            edges.push(EdgeSpec { disease: disease.clone(), finding: finding.clone(), prob: *prob });
        }
    }
    NetworkSpec {
        diseases: raw.keys().map(|name| DiseaseSpec { name: name.clone(), prior }).collect(),
        findings: findings.into_iter().map(|name| FindingSpec { name }).collect(),
        edges,
    }
}

pub fn parse_network(text: &str, format: NetworkFormat) -> Result<QmrNetwork> {
    QmrNetwork::from_spec(&parse_network_spec(text, format)?)
}

pub fn read_network_spec(path: impl AsRef<Path>, format: NetworkFormat) -> Result<NetworkSpec> {
    parse_network_spec(&read(path.as_ref())?, format)
}

pub fn load_network(path: impl AsRef<Path>, format: NetworkFormat) -> Result<QmrNetwork> {
    parse_network(&read(path.as_ref())?, format)
}

/// Serialize in the native format.
pub fn network_to_json(net: &QmrNetwork) -> String {
    serde_json::to_string_pretty(&net.to_spec()).expect("network spec serializes")
}

pub fn save_network(net: &QmrNetwork, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, network_to_json(net))
        .map_err(|source| Error::Io { path: path.display().to_string(), source })
}

/// One summarised consultation: the reported findings and the ones the doctor asked about.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueCase {
    #[serde(rename = "disease")]
    pub disease_name: String,
    #[serde(default)]
    pub explicit: IndexMap<String, bool>,
    #[serde(default)]
    pub implicit: IndexMap<String, bool>,
}

impl DialogueCase {
    fn normalized(self, index: usize) -> Result<Self> {
        let trim = |m: IndexMap<String, bool>| -> IndexMap<String, bool> {
            m.into_iter().map(|(k, v)| (k.trim().to_string(), v)).collect()
        };
        let case = DialogueCase {
            disease_name: self.disease_name.trim().to_string(),
            explicit: trim(self.explicit),
            implicit: trim(self.implicit),
        };
        if let Some(dup) = case.explicit.keys().find(|k| case.implicit.contains_key(*k)) {
            return Err(Error::OverlappingCase { case: index, finding: dup.clone() });
        }
        Ok(case)
    }

    /// State of a finding as recorded anywhere in the case.
    pub fn recorded(&self, finding: &str) -> Option<bool> {
        self.explicit.get(finding).or_else(|| self.implicit.get(finding)).copied()
    }
}

pub fn parse_dialogue_cases(text: &str) -> Result<Vec<DialogueCase>> {
    let raw: Vec<DialogueCase> = serde_json::from_str(text)?;
    raw.into_iter().enumerate().map(|(i, c)| c.normalized(i)).collect()
}

pub fn load_dialogue_cases(path: impl AsRef<Path>) -> Result<Vec<DialogueCase>> {
    parse_dialogue_cases(&read(path.as_ref())?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorMode {
    #[default]
    Uniform,
    Empirical,
}

impl FromStr for PriorMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "empirical" => Ok(Self::Empirical),
            other => Err(format!("unknown prior mode {other:?} (expected uniform or empirical)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BuildWarning {
    /// No case of this disease records any positive finding, so it can never be diagnosed
    /// once a positive finding is observed.
    NoPositiveFindings(String),
}

/// Estimate a network from case records.
///
/// Edge probability is the fraction of a disease's cases recording the finding as
/// positive (explicitly or implicitly). Zero estimates produce no edge.
pub fn build_network_from_cases(
    cases: &[DialogueCase],
    prior_mode: PriorMode,
) -> Result<(QmrNetwork, Vec<BuildWarning>)> {
    if cases.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let mut diseases: IndexMap<&str, usize> = IndexMap::new();
    let mut findings: IndexSet<&str> = IndexSet::new();
    let mut positives: IndexMap<(usize, usize), usize> = IndexMap::new();
    for case in cases {
        let entry = diseases.entry(case.disease_name.as_str());
        let d = entry.index();
        *entry.or_insert(0) += 1;
        for (name, &present) in case.explicit.iter().chain(case.implicit.iter()) {
            let (f, _) = findings.insert_full(name.as_str());
            if present {
                *positives.entry((d, f)).or_default() += 1;
            }
        }
    }

    let total = cases.len() as f64;
    let n = diseases.len() as f64;
    let spec_diseases = diseases
        .iter()
        .map(|(name, &count)| DiseaseSpec {
            name: name.to_string(),
            prior: match prior_mode {
                PriorMode::Uniform => 1.0 / n,
                PriorMode::Empirical => count as f64 / total,
            },
        })
        .collect();

    let mut keys: Vec<(usize, usize)> = positives.keys().copied().collect();
    keys.sort_unstable();
    let edges = keys
        .iter()
        .map(|&(d, f)| EdgeSpec {
            disease: diseases.get_index(d).unwrap().0.to_string(),
            finding: findings.get_index(f).unwrap().to_string(),
            prob: positives[&(d, f)] as f64 / diseases[d] as f64,
        })
        .collect();

    let warnings = diseases
        .keys()
        .enumerate()
        .filter(|(d, _)| !keys.iter().any(|&(kd, _)| kd == *d))
        .map(|(_, name)| BuildWarning::NoPositiveFindings(name.to_string()))
        .collect();

    let spec = NetworkSpec {
        diseases: spec_diseases,
        findings: findings.iter().map(|name| FindingSpec { name: name.to_string() }).collect(),
        edges,
    };
    Ok((QmrNetwork::from_spec(&spec)?, warnings))
}
