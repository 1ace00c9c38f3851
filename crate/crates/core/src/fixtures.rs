//! Small networks used in docs, tests and demos.

use crate::io::{parse_network, NetworkFormat};
use crate::network::QmrNetwork;

/// Two SymCAT entries in the symcat-style map format.
pub const SNAPSHOT_SYMCAT_JSON: &str = r#"{
  "abdominal-aortic-aneurysm": [
    ["Sharp abdominal pain", 0.53],
    ["Back pain", 0.35],
    ["Shortness of breath", 0.28]
  ],
  "abdominal-hernia": [
    ["Sharp abdominal pain", 0.65],
    ["Groin mass", 0.32],
    ["Ache all over", 0.29],
    ["Upper abdominal pain", 0.23]
  ]
}"#;

/// The two-disease, six-finding snapshot network with uniform priors.
pub fn snapshot() -> QmrNetwork {
    parse_network(SNAPSHOT_SYMCAT_JSON, NetworkFormat::Symcat).expect("snapshot network is valid")
}

/// One disease, one finding, certain activation.
pub fn deterministic() -> QmrNetwork {
    parse_network(r#"{"only": [["sign", 1.0]]}"#, NetworkFormat::Symcat).expect("valid")
}
