//! Prescription auditing: decompose a prescription into verification tasks,
//! retrieve and curate evidence per task, and synthesize findings plus
//! information gaps.
//!
//! The deterministic decomposer and synthesizer define the contract. Remote
//! agents may replace either stage through [`Transport`], but their output
//! is validated first and discarded (with an incident) when it fails.

mod agent;
mod curate;
mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::doses_per_day;
use crate::par::{self, Execution};
use crate::pest::PatientProfile;
use crate::query::{Category, VerificationTask};
use crate::store::{EdgeId, EntityId, HybridStore, Provenance, RowKey};
use crate::value::convert;

pub use agent::{
    validate_plan, validate_synthesis, Envelope, SynthesizedFinding, SynthesisPayload, Transport,
    TransportError, PROTOCOL,
};
pub use curate::{curate, Curated, TaskEvidence};
pub use synth::synthesize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuditError {
    #[error("invalid prescription: {0}")]
    InvalidPrescription(String),
    #[error("store must be sealed before auditing")]
    UnsealedStore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrescribedDrug {
    pub drug: EntityId,
    pub dose: f64,
    pub unit: String,
    pub frequency: String,
    #[serde(default)]
    pub route: String,
}

impl PrescribedDrug {
    /// Total daily amount in mg.
    pub fn daily_mg(&self) -> Result<f64, String> {
        let n = doses_per_day(&self.frequency).ok_or_else(|| format!("unknown frequency {:?}", self.frequency))?;
        convert(self.dose * n, &self.unit, "mg")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prescription {
    pub id: String,
    pub patient: PatientProfile,
    pub drug_list: Vec<PrescribedDrug>,
}

impl Prescription {
    pub fn validate(&self) -> Result<(), AuditError> {
        let bad = |m: String| Err(AuditError::InvalidPrescription(m));
        if self.drug_list.is_empty() {
            return bad("empty drug list".into());
        }
        self.patient.validate().map_err(|e| AuditError::InvalidPrescription(e.to_string()))?;
        for d in &self.drug_list {
            if d.drug.as_str().trim().is_empty() {
                return bad("empty drug id".into());
            }
            if !(d.dose.is_finite() && d.dose > 0.0) {
                return bad(format!("{}: dose must be positive", d.drug));
            }
        }
        Ok(())
    }

    /// Applies the entity identity normalization to every id.
    pub fn normalized(&self) -> Prescription {
        let norm = |ids: &[EntityId]| ids.iter().map(|i| EntityId::new(i.as_str())).collect::<Vec<_>>();
        let mut p = self.clone();
        for d in &mut p.drug_list {
            d.drug = EntityId::new(d.drug.as_str());
        }
        p.patient.allergies = norm(&self.patient.allergies);
        p.patient.conditions = norm(&self.patient.conditions);
        p.patient.co_medications = norm(&self.patient.co_medications);
        p
    }

    pub fn prescribed(&self, drug: &EntityId) -> Option<&PrescribedDrug> {
        self.drug_list.iter().find(|d| &d.drug == drug)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Critical,
    Major,
    Minor,
}

/// Severity assigned to non-passing findings, per category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityTable(pub BTreeMap<Category, Severity>);

impl Default for SeverityTable {
    fn default() -> Self {
        use Category::*;
        SeverityTable(BTreeMap::from([
            (Contraindication, Severity::Critical),
            (Allergy, Severity::Critical),
            (Interaction, Severity::Major),
            (Dosage, Severity::Major),
            (SpecialPopulation, Severity::Major),
            (Indication, Severity::Minor),
        ]))
    }
}

impl SeverityTable {
    pub fn get(&self, c: Category) -> Severity {
        self.0.get(&c).copied().unwrap_or(Severity::Major)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Violation,
    Unverifiable,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FactRef {
    Row { table: String, key: RowKey },
    Edge { id: EdgeId, edge_type: String, src: EntityId, dst: EntityId },
}

impl fmt::Display for FactRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FactRef::Row { table, key } => write!(f, "{table}#{key}"),
            FactRef::Edge { id, edge_type, src, dst } => write!(f, "({src})-[{edge_type} {id}]->({dst})"),
        }
    }
}

/// A retrieved fact with its provenance, the query that found it, and why
/// curation kept or ranked it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub id: String,
    pub fact: FactRef,
    pub prov: Provenance,
    pub query_trace: String,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub task_id: String,
    pub category: Category,
    pub drugs: Vec<EntityId>,
    pub verdict: Verdict,
    /// Absent on passing findings.
    pub severity: Option<Severity>,
    pub explanation: String,
    pub evidence: Vec<EvidenceItem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapKind {
    /// A patient attribute needed by a conditional rule is unknown.
    PatientAttribute,
    /// The knowledge base has no usable facts for the task.
    KbCoverage,
    /// The prescription itself could not be interpreted for the task.
    PrescriptionInput,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub attribute: String,
    pub kind: GapKind,
    pub tasks: Vec<String>,
    pub triggering_rules: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Incident {
    pub stage: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub prescription_id: String,
    pub store_hash: String,
    pub plan: Vec<VerificationTask>,
    pub findings: Vec<Finding>,
    pub gaps: Vec<Gap>,
    pub incidents: Vec<Incident>,
}

impl AuditReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn count(&self, v: Verdict) -> usize {
        self.findings.iter().filter(|f| f.verdict == v).count()
    }

    /// 0 when everything passes, 2 with any violation, 3 when something is
    /// unverifiable but nothing is violated.
    pub fn exit_code(&self) -> i32 {
        if self.count(Verdict::Violation) > 0 {
            2
        } else if self.count(Verdict::Unverifiable) > 0 {
            3
        } else {
            0
        }
    }

    pub fn source_texts(&self) -> BTreeSet<&str> {
        self.findings
            .iter()
            .flat_map(|f| f.evidence.iter().map(|e| e.prov.source_text.as_str()))
            .collect()
    }

    pub fn render_text(&self) -> String {
        let mut out = format!(
            "prescription {} against store {}\n",
            self.prescription_id,
            &self.store_hash[..self.store_hash.len().min(12)]
        );
        for f in &self.findings {
            let drugs: Vec<_> = f.drugs.iter().map(EntityId::as_str).collect();
            out.push_str(&format!(
                "{:<5} {:<18} {:<13} {}: {}\n",
                f.task_id,
                f.category.to_string(),
                f.verdict.to_string(),
                drugs.join(" + "),
                f.explanation
            ));
            if f.verdict == Verdict::Violation {
                for e in &f.evidence {
                    out.push_str(&format!("      [{}] {} \"{}\"\n", e.prov.doc_id, e.prov.section, e.prov.source_text));
                }
            }
        }
        for g in &self.gaps {
            out.push_str(&format!(
                "gap   {} ({:?}) blocks {}\n",
                g.attribute,
                g.kind,
                g.tasks.join(", ")
            ));
        }
        for i in &self.incidents {
            out.push_str(&format!("incident [{}] {}\n", i.stage, i.reason));
        }
        out
    }
}

/// Deterministic plan: per prescribed drug one task for each constraint
/// category, then one interaction task per unordered pair drawn from the
/// prescribed drugs and the patient's co-medications (at least one side
/// prescribed), then allergy tasks when allergies are recorded.
pub fn decompose(p: &Prescription) -> Vec<VerificationTask> {
    let mut prescribed: Vec<EntityId> = Vec::new();
    for d in &p.drug_list {
        if !prescribed.contains(&d.drug) {
            prescribed.push(d.drug.clone());
        }
    }
    let mut all = prescribed.clone();
    for c in &p.patient.co_medications {
        if !all.contains(c) {
            all.push(c.clone());
        }
    }
    let mut specs: Vec<(Category, Vec<EntityId>)> = Vec::new();
    for d in &prescribed {
        for c in [Category::Indication, Category::Dosage, Category::Contraindication, Category::SpecialPopulation] {
            specs.push((c, vec![d.clone()]));
        }
    }
    for i in 0..prescribed.len() {
        for j in i + 1..all.len() {
            specs.push((Category::Interaction, vec![all[i].clone(), all[j].clone()]));
        }
    }
    if !p.patient.allergies.is_empty() {
        for d in &prescribed {
            specs.push((Category::Allergy, vec![d.clone()]));
        }
    }
    specs
        .into_iter()
        .enumerate()
        .map(|(i, (c, drugs))| {
            VerificationTask::new(&format!("T{}", i + 1), c, drugs).expect("decomposer emits valid tasks")
        })
        .collect()
}

/// Audit configuration. The default runs fully deterministic.
#[derive(Default)]
pub struct Auditor<'a> {
    pub execution: Execution,
    pub severity: SeverityTable,
    pub decomposition: Option<&'a dyn Transport>,
    pub synthesis: Option<&'a dyn Transport>,
}

impl Auditor<'_> {
    pub fn audit(&self, p: &Prescription, store: &HybridStore) -> Result<AuditReport, AuditError> {
        p.validate()?;
        let hash = store.seal_hash().ok_or(AuditError::UnsealedStore)?.to_string();
        let p = p.normalized();
        let mut incidents = Vec::new();

        let plan = match self.decomposition {
            None => decompose(&p),
            Some(t) => match agent::remote_plan(t, &p) {
                Ok(plan) => plan,
                Err(reason) => {
                    incidents.push(Incident { stage: "decomposition".into(), reason });
                    decompose(&p)
                }
            },
        };

        let package: Vec<TaskEvidence> =
            par::map(self.execution, &plan, |task| curate(store, &p.patient, task));

        let deterministic = synthesize(&p, &package, &self.severity);
        let (findings, gaps) = match self.synthesis {
            None => deterministic,
            Some(t) => match agent::remote_synthesis(t, &p, &package, &self.severity) {
                Ok(out) => out,
                Err(reason) => {
                    incidents.push(Incident { stage: "synthesis".into(), reason });
                    deterministic
                }
            },
        };

        Ok(AuditReport { prescription_id: p.id.clone(), store_hash: hash, plan, findings, gaps, incidents })
    }
}

/// Audits with the deterministic decomposer and synthesizer.
pub fn audit(p: &Prescription, store: &HybridStore) -> Result<AuditReport, AuditError> {
    Auditor::default().audit(p, store)
}

#[cfg(test)]
mod tests;
