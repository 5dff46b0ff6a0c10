use serde_json::json;

use super::*;
use crate::eval::{case_study_prescription, case_study_store};
use crate::ingest::{build_store, CorpusDoc};
use crate::par::Execution;
use crate::schema::standard_schema;

fn store_from(md: &str) -> HybridStore {
    let doc = CorpusDoc { doc_id: "d".into(), stratum: "s".into(), markdown: md.into(), gold: None };
    let mut s = build_store(&[doc], standard_schema(), Execution::Sequential, None).unwrap().store;
    s.seal().unwrap();
    s
}

const RENAL_MD: &str = "# Metformin

## Indications and Usage

- Indicated for type 2 diabetes mellitus.

## Dosage and Administration

- Standard dose: 1000 mg twice daily.
- CrCl 30 to 45 mL/min: 500 mg twice daily.
- CrCl < 30 mL/min: 250 mg once daily.

## Contraindications

- Contraindicated in patients with lactic acidosis.

## Composition

- Contains ingredient metformin hydrochloride.
- Ingredient metformin hydrochloride belongs to class biguanides.
";

fn metformin(dose: f64, patient: PatientProfile) -> Prescription {
    Prescription {
        id: "rx".into(),
        patient,
        drug_list: vec![PrescribedDrug {
            drug: EntityId::new("Metformin"),
            dose,
            unit: "mg".into(),
            frequency: "twice daily".into(),
            route: String::new(),
        }],
    }
}

fn known_patient() -> PatientProfile {
    PatientProfile {
        age: Some(50.0),
        weight: Some(80.0),
        crcl: Some(90.0),
        hepatic_status: Some(crate::pest::HepaticStatus::None),
        pregnancy: Some(false),
        conditions: vec![EntityId::new("type 2 diabetes mellitus")],
        ..Default::default()
    }
}

fn finding(r: &AuditReport, c: Category) -> &Finding {
    r.findings.iter().find(|f| f.category == c).unwrap()
}

#[test]
fn case_study_flags_the_inducer() {
    let store = case_study_store(Execution::Sequential).unwrap();
    let r = audit(&case_study_prescription(), &store).unwrap();
    let f = finding(&r, Category::Interaction);
    assert_eq!(f.verdict, Verdict::Violation);
    assert_eq!(f.severity, Some(Severity::Major));
    assert!(f.evidence.iter().any(|e| e.prov.source_text.contains("strong CYP3A4 inducer")));
    assert!(f.evidence.iter().all(|e| !e.query_trace.is_empty()));
    assert_eq!(r.count(Verdict::Violation), 1);
    assert_eq!(r.exit_code(), 2);
}

#[test]
fn report_is_identical_across_modes_and_runs() {
    let store = case_study_store(Execution::Sequential).unwrap();
    let p = case_study_prescription();
    let a = Auditor { execution: Execution::Sequential, ..Default::default() }.audit(&p, &store).unwrap();
    let b = Auditor::default().audit(&p, &store).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.to_json(), audit(&p, &store).unwrap().to_json());
}

#[test]
fn two_drugs_give_nine_tasks() {
    let plan = decompose(&case_study_prescription().normalized());
    assert_eq!(plan.len(), 9);
    assert_eq!(plan.iter().filter(|t| t.category == Category::Interaction).count(), 1);
    let ids: Vec<&str> = plan.iter().map(|t| t.id.as_str()).collect();
    assert_eq!(ids.first(), Some(&"T1"));
    assert_eq!(ids.last(), Some(&"T9"));
}

#[test]
fn co_medications_and_allergies_extend_the_plan() {
    let mut p = case_study_prescription();
    p.patient.co_medications = vec![EntityId::new("Ketoconazole")];
    p.patient.allergies = vec![EntityId::new("penicillin")];
    let plan = decompose(&p.normalized());
    assert_eq!(plan.iter().filter(|t| t.category == Category::Interaction).count(), 3);
    assert_eq!(plan.iter().filter(|t| t.category == Category::Allergy).count(), 2);
}

#[test]
fn clean_prescription_passes() {
    let store = store_from(RENAL_MD);
    let r = audit(&metformin(1000.0, known_patient()), &store).unwrap();
    assert!(r.findings.iter().all(|f| f.verdict == Verdict::Pass), "{}", r.render_text());
    assert!(r.findings.iter().all(|f| f.severity.is_none()));
    assert_eq!(r.exit_code(), 0);
}

#[test]
fn overdose_cites_the_renal_rule() {
    let store = store_from(RENAL_MD);
    let mut p = known_patient();
    p.crcl = Some(40.0);
    let r = audit(&metformin(1000.0, p), &store).unwrap();
    let f = finding(&r, Category::Dosage);
    assert_eq!(f.verdict, Verdict::Violation);
    assert_eq!(f.evidence.len(), 1);
    assert_eq!(f.evidence[0].prov.source_text, "CrCl 30 to 45 mL/min: 500 mg twice daily.");
}

#[test]
fn unknown_crcl_is_a_gap_never_a_verdict() {
    let store = store_from(RENAL_MD);
    let mut p = known_patient();
    p.crcl = None;
    let r = audit(&metformin(1000.0, p), &store).unwrap();
    let f = finding(&r, Category::Dosage);
    assert_eq!(f.verdict, Verdict::Unverifiable);
    let gap = r.gaps.iter().find(|g| g.attribute == "crcl").unwrap();
    assert_eq!(gap.kind, GapKind::PatientAttribute);
    assert_eq!(gap.tasks, vec![f.task_id.clone()]);
    assert_eq!(gap.triggering_rules.len(), 2);
    assert_eq!(r.exit_code(), 3);
}

#[test]
fn unknown_drug_is_unverifiable_everywhere() {
    let store = store_from(RENAL_MD);
    let mut p = metformin(10.0, known_patient());
    p.drug_list[0].drug = EntityId::new("Zzyzxamab");
    let r = audit(&p, &store).unwrap();
    assert!(r.findings.iter().all(|f| f.verdict == Verdict::Unverifiable && f.evidence.is_empty()));
    assert_eq!(r.gaps.len(), 1);
    assert_eq!(r.gaps[0].kind, GapKind::KbCoverage);
    assert_eq!(r.gaps[0].attribute, "kb:zzyzxamab");
    assert_eq!(r.gaps[0].tasks.len(), 4);
}

#[test]
fn contraindicated_condition_is_critical() {
    let store = store_from(RENAL_MD);
    let mut p = known_patient();
    p.conditions.push(EntityId::new("Lactic Acidosis"));
    let r = audit(&metformin(500.0, p), &store).unwrap();
    let f = finding(&r, Category::Contraindication);
    assert_eq!((f.verdict, f.severity), (Verdict::Violation, Some(Severity::Critical)));
}

#[test]
fn allergy_reaches_through_ingredient_class() {
    let store = store_from(RENAL_MD);
    let mut p = known_patient();
    p.allergies = vec![EntityId::new("biguanides")];
    let r = audit(&metformin(500.0, p), &store).unwrap();
    let f = finding(&r, Category::Allergy);
    assert_eq!(f.verdict, Verdict::Violation);
    assert_eq!(f.evidence.len(), 2);
}

#[test]
fn unsealed_store_and_bad_input_are_refused() {
    let doc = CorpusDoc { doc_id: "d".into(), stratum: "s".into(), markdown: RENAL_MD.into(), gold: None };
    let open = build_store(&[doc], standard_schema(), Execution::Sequential, None).unwrap().store;
    assert_eq!(audit(&metformin(500.0, known_patient()), &open).unwrap_err(), AuditError::UnsealedStore);
    let store = store_from(RENAL_MD);
    assert!(matches!(audit(&metformin(0.0, known_patient()), &store), Err(AuditError::InvalidPrescription(_))));
    let mut empty = metformin(1.0, known_patient());
    empty.drug_list.clear();
    assert!(matches!(audit(&empty, &store), Err(AuditError::InvalidPrescription(_))));
}

struct Failing;

impl Transport for Failing {
    fn exchange(&self, _: &Envelope) -> Result<Envelope, TransportError> {
        Err(TransportError::Timeout)
    }
}

/// Answers with a fixed payload, echoing the request's envelope fields.
struct Canned(serde_json::Value);

impl Transport for Canned {
    fn exchange(&self, req: &Envelope) -> Result<Envelope, TransportError> {
        let mut resp = req.clone();
        resp.status = "ok".into();
        resp.payload = self.0.clone();
        Ok(resp)
    }
}

fn synthesis_payload(r: &AuditReport) -> serde_json::Value {
    let findings: Vec<SynthesizedFinding> = r
        .findings
        .iter()
        .map(|f| SynthesizedFinding {
            task_id: f.task_id.clone(),
            verdict: f.verdict,
            explanation: format!("agent: {}", f.explanation),
            evidence_ids: f.evidence.iter().map(|e| e.id.clone()).collect(),
        })
        .collect();
    serde_json::to_value(SynthesisPayload { findings, gaps: r.gaps.clone() }).unwrap()
}

#[test]
fn failing_agents_fall_back_with_incidents() {
    let store = case_study_store(Execution::Sequential).unwrap();
    let p = case_study_prescription();
    let baseline = audit(&p, &store).unwrap();
    let r = Auditor { decomposition: Some(&Failing), synthesis: Some(&Failing), ..Default::default() }
        .audit(&p, &store)
        .unwrap();
    assert_eq!(r.findings, baseline.findings);
    assert_eq!(r.incidents.len(), 2);
    assert_eq!(r.incidents[0].stage, "decomposition");
    assert!(r.incidents[1].reason.contains("timed out"));
}

#[test]
fn valid_remote_synthesis_is_accepted() {
    let store = case_study_store(Execution::Sequential).unwrap();
    let p = case_study_prescription();
    let baseline = audit(&p, &store).unwrap();
    let agent = Canned(synthesis_payload(&baseline));
    let r = Auditor { synthesis: Some(&agent), ..Default::default() }.audit(&p, &store).unwrap();
    assert!(r.incidents.is_empty(), "{:?}", r.incidents);
    assert!(r.findings.iter().all(|f| f.explanation.starts_with("agent: ")));
    assert_eq!(r.count(Verdict::Violation), baseline.count(Verdict::Violation));
}

#[test]
fn fabricated_citation_is_rejected() {
    let store = case_study_store(Execution::Sequential).unwrap();
    let p = case_study_prescription();
    let baseline = audit(&p, &store).unwrap();
    let mut payload = synthesis_payload(&baseline);
    payload["findings"][0]["evidence_ids"] = json!(["T1.E99"]);
    let r = Auditor { synthesis: Some(&Canned(payload)), ..Default::default() }.audit(&p, &store).unwrap();
    assert_eq!(r.findings, baseline.findings);
    assert!(r.incidents[0].reason.starts_with("citation violation"));
}

#[test]
fn gap_priority_overrides_agent_verdicts() {
    let store = store_from(RENAL_MD);
    let mut patient = known_patient();
    patient.crcl = None;
    let p = metformin(1000.0, patient);
    let baseline = audit(&p, &store).unwrap();
    let mut payload = synthesis_payload(&baseline);
    for f in payload["findings"].as_array_mut().unwrap() {
        f["verdict"] = json!("Pass");
    }
    let r = Auditor { synthesis: Some(&Canned(payload)), ..Default::default() }.audit(&p, &store).unwrap();
    assert_eq!(finding(&r, Category::Dosage).verdict, Verdict::Unverifiable);
    assert!(r.incidents[0].reason.starts_with("gap priority"));
}

#[test]
fn remote_plan_must_stay_within_the_prescription() {
    let store = case_study_store(Execution::Sequential).unwrap();
    let p = case_study_prescription();
    let foreign = json!({ "tasks": [{ "id": "T1", "category": "Dosage", "task_type": "Constraint", "drugs": ["warfarin"] }] });
    let r = Auditor { decomposition: Some(&Canned(foreign)), ..Default::default() }.audit(&p, &store).unwrap();
    assert!(r.incidents[0].reason.contains("not part of the prescription"), "{:?}", r.incidents);
    assert_eq!(r.plan, decompose(&p.normalized()));

    let narrow = json!({ "tasks": [{ "id": "X1", "category": "Interaction", "task_type": "Topology", "drugs": ["abemaciclib", "rifampin"] }] });
    let r = Auditor { decomposition: Some(&Canned(narrow)), ..Default::default() }.audit(&p, &store).unwrap();
    assert!(r.incidents.is_empty());
    assert_eq!(r.findings.len(), 1);
    assert_eq!(r.findings[0].verdict, Verdict::Violation);
}
