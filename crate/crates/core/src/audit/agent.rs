//! Remote agent adapters. A transport carries JSON envelopes; whatever comes
//! back is validated before it can replace a deterministic stage.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::synth::{assemble, Outcome};
use super::{Curated, Finding, Gap, Prescription, SeverityTable, TaskEvidence, Verdict};
use crate::query::{Category, VerificationTask};

pub const PROTOCOL: &str = "hpkb-agent/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub protocol: String,
    pub role: String,
    pub request_id: String,
    pub status: String,
    pub payload: serde_json::Value,
}

impl Envelope {
    pub fn request(role: &str, request_id: &str, payload: serde_json::Value) -> Self {
        Envelope {
            protocol: PROTOCOL.into(),
            role: role.into(),
            request_id: request_id.into(),
            status: "request".into(),
            payload,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("agent timed out")]
    Timeout,
    #[error("agent rejected the request: {0}")]
    Rejected(String),
    #[error("transport failure: {0}")]
    Io(String),
}

pub trait Transport: Sync {
    fn exchange(&self, request: &Envelope) -> Result<Envelope, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesizedFinding {
    pub task_id: String,
    pub verdict: Verdict,
    pub explanation: String,
    #[serde(default)]
    pub evidence_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisPayload {
    pub findings: Vec<SynthesizedFinding>,
    #[serde(default)]
    pub gaps: Vec<Gap>,
}

fn call(t: &dyn Transport, req: Envelope) -> Result<serde_json::Value, String> {
    let resp = t.exchange(&req).map_err(|e| e.to_string())?;
    if resp.protocol != PROTOCOL || resp.role != req.role || resp.request_id != req.request_id {
        return Err(format!(
            "envelope mismatch: got {}/{}/{}",
            resp.protocol, resp.role, resp.request_id
        ));
    }
    if resp.status != "ok" {
        return Err(format!("agent status {}", resp.status));
    }
    Ok(resp.payload)
}

/// Checks a proposed plan against the task invariants and the prescription.
pub fn validate_plan(p: &Prescription, tasks: &[VerificationTask]) -> Result<(), String> {
    if tasks.is_empty() {
        return Err("invalid plan: empty".into());
    }
    let prescribed: BTreeSet<_> = p.drug_list.iter().map(|d| &d.drug).collect();
    let mut ids = BTreeSet::new();
    for t in tasks {
        t.validate().map_err(|e| format!("invalid plan: {}: {e}", t.id))?;
        if !ids.insert(&t.id) {
            return Err(format!("invalid plan: duplicate task id {}", t.id));
        }
        for d in &t.drugs {
            if !prescribed.contains(d) && !p.patient.co_medications.contains(d) {
                return Err(format!("invalid plan: {}: {d} is not part of the prescription", t.id));
            }
        }
        if t.category == Category::Interaction && !t.drugs.iter().any(|d| prescribed.contains(d)) {
            return Err(format!("invalid plan: {}: no prescribed drug involved", t.id));
        }
    }
    Ok(())
}

pub(super) fn remote_plan(t: &dyn Transport, p: &Prescription) -> Result<Vec<VerificationTask>, String> {
    let payload = call(t, Envelope::request("decomposition", &format!("{}:plan", p.id), json!({ "prescription": p })))?;
    let tasks: Vec<VerificationTask> = serde_json::from_value(payload.get("tasks").cloned().unwrap_or_default())
        .map_err(|e| format!("invalid plan: {e}"))?;
    validate_plan(p, &tasks)?;
    Ok(tasks)
}

fn must_be_unverifiable(te: &TaskEvidence) -> bool {
    match &te.curated {
        Curated::Unresolved { .. } => true,
        Curated::Rules { selection, .. } => !selection.gaps.is_empty(),
        Curated::Paths { .. } => false,
    }
}

/// Checks agent findings against the evidence package: one finding per
/// task, citations that exist, cited violations, and unverifiable tasks
/// backed by gaps.
pub fn validate_synthesis(package: &[TaskEvidence], out: &SynthesisPayload) -> Result<(), String> {
    if out.findings.len() != package.len() {
        return Err(format!("plan coverage: {} findings for {} tasks", out.findings.len(), package.len()));
    }
    for (te, f) in package.iter().zip(&out.findings) {
        if f.task_id != te.task.id {
            return Err(format!("plan coverage: expected {} got {}", te.task.id, f.task_id));
        }
        for id in &f.evidence_ids {
            if !te.items.iter().any(|i| &i.id == id) {
                return Err(format!("citation violation: {} cites unknown evidence {id}", f.task_id));
            }
        }
        if f.verdict == Verdict::Violation && f.evidence_ids.is_empty() {
            return Err(format!("citation violation: {} is a violation without evidence", f.task_id));
        }
        if must_be_unverifiable(te) && f.verdict != Verdict::Unverifiable {
            return Err(format!("gap priority: {} has unresolved attributes", f.task_id));
        }
        if f.verdict == Verdict::Unverifiable && !out.gaps.iter().any(|g| g.tasks.contains(&f.task_id)) {
            return Err(format!("{} is unverifiable without a gap entry", f.task_id));
        }
    }
    for g in &out.gaps {
        if let Some(t) = g.tasks.iter().find(|t| !package.iter().any(|te| &te.task.id == *t)) {
            return Err(format!("gap {} names unknown task {t}", g.attribute));
        }
    }
    Ok(())
}

pub(super) fn remote_synthesis(
    t: &dyn Transport,
    p: &Prescription,
    package: &[TaskEvidence],
    severity: &SeverityTable,
) -> Result<(Vec<Finding>, Vec<Gap>), String> {
    let payload = call(
        t,
        Envelope::request("synthesis", &format!("{}:synthesis", p.id), json!({ "prescription": p, "evidence": package })),
    )?;
    let out: SynthesisPayload = serde_json::from_value(payload).map_err(|e| format!("malformed synthesis: {e}"))?;
    validate_synthesis(package, &out)?;
    let outcomes = out
        .findings
        .into_iter()
        .map(|f| Outcome { verdict: f.verdict, explanation: f.explanation, cite: f.evidence_ids, gaps: Vec::new() })
        .collect();
    let (findings, _) = assemble(package, outcomes, severity);
    Ok((findings, out.gaps))
}
