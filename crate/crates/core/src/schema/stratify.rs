use serde::{Deserialize, Serialize};

use crate::store::Provenance;

/// Logical nature of a piece of knowledge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataNature {
    /// Atomic, numerical, conditional facts (dose limits, thresholds).
    AtomicNumericalConditional,
    /// Associative, hierarchical, transitive facts (interactions, lineage).
    AssociativeHierarchicalTransitive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreTarget {
    Relational,
    Graph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactCandidate {
    pub nature: DataNature,
    pub payload: serde_json::Value,
    pub prov: Provenance,
}

pub fn stratify(candidate: &FactCandidate) -> StoreTarget {
    match candidate.nature {
        DataNature::AtomicNumericalConditional => StoreTarget::Relational,
        DataNature::AssociativeHierarchicalTransitive => StoreTarget::Graph,
    }
}
