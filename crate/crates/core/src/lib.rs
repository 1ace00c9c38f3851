//! Differential diagnosis over QMR-style noisy-OR belief networks.
//!
//! Diseases point at findings; each edge carries the probability that the
//! disease alone activates the finding. With one disease per case the exact
//! posterior is linear in the number of observed findings, which makes it
//! cheap enough to score every candidate question by its expected information
//! about the diseases and to search a few questions ahead.
//!
//! ```
//! use ddx_core::{fixtures, posterior, select_next, Evidence, LookaheadConfig};
//!
//! let net = fixtures::snapshot();
//! let pain = net.finding_id("Sharp abdominal pain").unwrap();
//! let ev = Evidence::from_sets([pain], []).unwrap();
//! let post = posterior(&net, &ev).unwrap();
//! assert!((post.probs[1] - 0.55085).abs() < 1e-4);
//! let next = select_next(&net, &ev, LookaheadConfig::default()).unwrap().unwrap();
//! assert!(next.utility > 0.0);
//! ```

pub mod error;
pub mod eval;
pub mod exec;
pub mod fixtures;
pub mod inference;
pub mod inquiry;
pub mod io;
pub mod network;
pub mod session;
pub mod simulator;
pub mod synthetic;

pub use error::{Error, Result, Violation};
pub use exec::Execution;
pub use inference::{general_noisy_or_posterior, log_joint_weight, posterior, top_k, Evidence, JointPrior, LogWeight, Posterior};
pub use inquiry::{
    candidate_findings, lookahead_value, outcome_probability, score_candidates, select_next, select_next_with, utility,
    CandidateScore, LookaheadConfig, UtilityKind,
};
pub use io::{build_network_from_cases, load_dialogue_cases, load_network, DialogueCase, NetworkFormat, PriorMode};
pub use network::{validate, DiseaseId, FindingId, NetworkBuilder, NetworkSpec, QmrNetwork};
pub use session::{Decision, Session, SessionConfig, SessionState, StopReason};
pub use simulator::{sample_case, SimulatedCase};
pub use synthetic::{generate_synthetic_network, SyntheticParams};
