//! Iterative schema refinement: a propose/verify/solidify loop over a
//! stratified document sample that stops once `n_stable` consecutive
//! documents produce no accepted change.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::proposers::{ExpertPolicy, Verdict};
use super::{HybridSchema, SchemaChange};
use crate::ingest::SectionedDocument;
use crate::store::Provenance;

pub const DEFAULT_N_STABLE: usize = 10;

/// Which half of the hybrid model a gap belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Constraint,
    Topology,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaChangeProposal {
    pub gap_description: String,
    pub classification: Classification,
    pub change: SchemaChange,
    pub prov: Provenance,
}

impl SchemaChangeProposal {
    /// Constraint proposals must target tables; topology proposals the graph.
    pub fn is_consistent(&self, change: &SchemaChange) -> bool {
        match self.classification {
            Classification::Constraint => change.targets_relational(),
            Classification::Topology => !change.targets_relational(),
        }
    }
}

/// Proposes schema changes for a document. Must not have side effects.
pub trait GapDetector {
    fn propose(&self, doc: &SectionedDocument, schema: &HybridSchema) -> Vec<SchemaChangeProposal>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ProposalOutcome {
    Applied,
    /// Accepted, but identical to a change already staged for this document.
    Merged,
    Rejected,
    Illegal { reason: String },
}

/// One line of the proposal log; enough to replay the run exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub doc_id: String,
    pub stratum: String,
    pub proposals: Vec<SchemaChangeProposal>,
    pub verdicts: Vec<Verdict>,
    pub outcomes: Vec<ProposalOutcome>,
    pub schema_version: u32,
    pub consecutive_stable: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsrState {
    pub schema: HybridSchema,
    pub consecutive_stable: usize,
    pub n_stable: usize,
    pub docs_processed: usize,
    pub log: Vec<DecisionRecord>,
}

impl IsrState {
    pub fn new(seed: HybridSchema, n_stable: usize) -> Self {
        IsrState { schema: seed, consecutive_stable: 0, n_stable, docs_processed: 0, log: Vec::new() }
    }

    pub fn is_stable(&self) -> bool {
        self.consecutive_stable >= self.n_stable
    }
}

#[derive(Debug, Clone)]
pub struct StratifiedDoc {
    pub stratum: String,
    pub doc: SectionedDocument,
}

/// Processes one document through propose, review and solidify.
pub fn isr_step(
    doc: &SectionedDocument,
    stratum: &str,
    mut state: IsrState,
    proposer: &dyn GapDetector,
    policy: &mut dyn ExpertPolicy,
) -> IsrState {
    let proposals = proposer.propose(doc, &state.schema);
    let mut verdicts = Vec::with_capacity(proposals.len());
    let mut outcomes = Vec::with_capacity(proposals.len());
    let mut staged: Vec<SchemaChange> = Vec::new();
    let mut trial = state.schema.clone();

    for proposal in &proposals {
        let verdict = policy.review(&doc.doc_id, proposal, &state.schema);
        let change = match &verdict {
            Verdict::Accept => Some(proposal.change.clone()),
            Verdict::AcceptWithAbstraction { change } => Some(change.clone()),
            Verdict::Reject => None,
        };
        let outcome = match change {
            None => ProposalOutcome::Rejected,
            Some(change) if staged.contains(&change) => ProposalOutcome::Merged,
            Some(change) if !proposal.is_consistent(&change) => ProposalOutcome::Illegal {
                reason: format!(
                    "{:?} proposal cannot {}",
                    proposal.classification,
                    change.describe()
                ),
            },
            Some(change) => match trial.validate_change(&change) {
                Ok(()) => {
                    trial.apply_unchecked(&change);
                    staged.push(change);
                    ProposalOutcome::Applied
                }
                Err(e) => ProposalOutcome::Illegal { reason: e.to_string() },
            },
        };
        verdicts.push(verdict);
        outcomes.push(outcome);
    }

    if staged.is_empty() {
        state.consecutive_stable += 1;
    } else {
        state.schema = state
            .schema
            .apply(&staged)
            .expect("changes were validated one by one against the same base");
        state.consecutive_stable = 0;
    }
    state.docs_processed += 1;
    state.log.push(DecisionRecord {
        doc_id: doc.doc_id.clone(),
        stratum: stratum.to_string(),
        proposals,
        verdicts,
        outcomes,
        schema_version: state.schema.version,
        consecutive_stable: state.consecutive_stable,
    });
    state
}

/// Round-robin order across strata (sorted by tag); source order within a
/// stratum. Any prefix of length n holds at most ceil(n / strata) documents
/// of each stratum when strata are equally sized.
pub fn stratified_order(strata: &[&str]) -> Vec<usize> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in strata.iter().enumerate() {
        groups.entry(s).or_default().push(i);
    }
    let mut cursors: Vec<std::slice::Iter<'_, usize>> = groups.values().map(|g| g.iter()).collect();
    let mut order = Vec::with_capacity(strata.len());
    while order.len() < strata.len() {
        for c in cursors.iter_mut() {
            if let Some(&i) = c.next() {
                order.push(i);
            }
        }
    }
    order
}

#[derive(Debug, Clone)]
pub struct IsrOutcome {
    pub converged: bool,
    pub state: IsrState,
}

impl IsrOutcome {
    pub fn schema(&self) -> &HybridSchema {
        &self.state.schema
    }
}

/// Runs refinement from `seed` until stabilization or corpus exhaustion.
/// Exhaustion is reported as `converged == false`, never as a panic.
pub fn run_isr(
    corpus: &[StratifiedDoc],
    seed: HybridSchema,
    proposer: &dyn GapDetector,
    policy: &mut dyn ExpertPolicy,
    n_stable: usize,
) -> IsrOutcome {
    let mut state = IsrState::new(seed, n_stable);
    if state.is_stable() {
        return IsrOutcome { converged: true, state };
    }
    let strata: Vec<&str> = corpus.iter().map(|d| d.stratum.as_str()).collect();
    for i in stratified_order(&strata) {
        let d = &corpus[i];
        state = isr_step(&d.doc, &d.stratum, state, proposer, policy);
        if state.is_stable() {
            return IsrOutcome { converged: true, state };
        }
    }
    IsrOutcome { converged: false, state }
}
