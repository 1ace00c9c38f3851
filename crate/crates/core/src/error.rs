use std::fmt;

use thiserror::Error;

use crate::network::{DiseaseId, FindingId};

/// A single broken network invariant, as reported by [`crate::network::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateDisease(String),
    DuplicateFinding(String),
    EmptyName { kind: &'static str, index: usize },
    PriorOutOfRange { disease: String, prior: f64 },
    PriorSum(f64),
    EdgeProbOutOfRange { disease: String, finding: String, prob: f64 },
    UnknownDisease { edge: usize, name: String },
    UnknownFinding { edge: usize, name: String },
    DuplicateEdge { disease: String, finding: String },
    NoDiseases,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateDisease(n) => write!(f, "duplicate disease name {n:?}"),
            Violation::DuplicateFinding(n) => write!(f, "duplicate finding name {n:?}"),
            Violation::EmptyName { kind, index } => write!(f, "empty {kind} name at position {index}"),
            Violation::PriorOutOfRange { disease, prior } => {
                write!(f, "prior out of [0,1]: {disease:?} has {prior}")
            }
            Violation::PriorSum(sum) => write!(f, "priors sum to {sum}, expected 1"),
            Violation::EdgeProbOutOfRange { disease, finding, prob } => {
                write!(f, "edge prob out of (0,1]: {disease:?} -> {finding:?} has {prob}")
            }
            Violation::UnknownDisease { edge, name } => {
                write!(f, "unknown disease {name:?} referenced by edge {edge}")
            }
            Violation::UnknownFinding { edge, name } => {
                write!(f, "unknown finding {name:?} referenced by edge {edge}")
            }
            Violation::DuplicateEdge { disease, finding } => {
                write!(f, "duplicate edge {disease:?} -> {finding:?}")
            }
            Violation::NoDiseases => write!(f, "network has no diseases"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid network: {}", join(.0))]
    InvalidNetwork(Vec<Violation>),
    #[error("unknown disease id {0}")]
    UnknownDiseaseId(DiseaseId),
    #[error("unknown finding id {0}")]
    UnknownFindingId(FindingId),
    #[error("unknown finding name {0:?}")]
    UnknownFindingName(String),
    #[error("unknown disease name {0:?}")]
    UnknownDiseaseName(String),
    #[error("finding {0} is both positive and negative")]
    ConflictingEvidence(FindingId),
    #[error("finding {0} has already been observed")]
    AlreadyObserved(FindingId),
    #[error("case {case}: finding {finding:?} is both explicit and implicit")]
    OverlappingCase { case: usize, finding: String },
    #[error("k = {k} out of range 1..={n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("exact enumeration supports at most {max} diseases, network has {n}")]
    TooManyDiseases { n: usize, max: usize },
    #[error("evidence has zero probability under the model")]
    ZeroProbabilityEvidence,
    #[error("session is already diagnosed")]
    SessionClosed,
    #[error("step budget of {max_steps} questions is used up")]
    BudgetExhausted { max_steps: usize },
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("transcript does not replay: {0}")]
    TranscriptMismatch(String),
    #[error("infeasible parameters: {0}")]
    InfeasibleParameters(String),
    #[error("no cases supplied")]
    EmptyCorpus,
    #[error("gave up after {attempts} attempts to draw a case with a positive finding for disease {disease}")]
    ResampleLimit { disease: DiseaseId, attempts: usize },
}

fn join(violations: &[Violation]) -> String {
    violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
