//! Two-drug fixture: a CDK4/6 inhibitor co-prescribed with a strong CYP3A4
//! inducer for a patient with both indications.

use super::EvalError;
use crate::audit::{AuditReport, Auditor, PrescribedDrug, Prescription};
use crate::ingest::{build_store, CorpusDoc};
use crate::par::Execution;
use crate::pest::{HepaticStatus, PatientProfile};
use crate::schema::standard_schema;
use crate::store::{EntityId, HybridStore};

pub const ABEMACICLIB_MD: &str = "# Abemaciclib

Kinase inhibitor tablets for oral use.

## Indications and Usage

- Indicated for HR-positive HER2-negative metastatic breast cancer.

## Dosage and Administration

- Standard dose: 150 mg twice daily.
- severe hepatic impairment: 150 mg once daily.
- CrCl < 30 mL/min: 150 mg twice daily; reduce 50% if severe hepatic impairment.

## Contraindications

- Contraindicated in pregnancy.

## Use in Specific Populations

- Avoid in aged under 18 years.

## Drug Interactions

- Interacts with Rifampin: strong CYP3A4 inducer; decreases abemaciclib exposure.
- Interacts with Ketoconazole: strong CYP3A4 inhibitor; increases abemaciclib exposure.
- Member of class CDK4/6 inhibitors.

## Composition

- Contains ingredient lactose monohydrate.
- Ingredient lactose monohydrate belongs to class lactose.
";

pub const RIFAMPIN_MD: &str = "# Rifampin

Antimycobacterial capsules for oral use.

## Indications and Usage

- Indicated for tuberculosis.

## Dosage and Administration

- Standard dose: 600 mg once daily.
- weight < 50 kg: 450 mg once daily.

## Contraindications

- Contraindicated in patients with jaundice.

## Drug Interactions

- Member of class rifamycins.
- Member of class strong CYP3A4 inducers.

## Composition

- Contains ingredient magnesium stearate.
- Ingredient magnesium stearate belongs to class stearates.
";

pub fn case_study_corpus() -> Vec<CorpusDoc> {
    [("abemaciclib", ABEMACICLIB_MD), ("rifampin", RIFAMPIN_MD)]
        .into_iter()
        .map(|(id, md)| CorpusDoc { doc_id: id.into(), stratum: "case_study".into(), markdown: md.into(), gold: None })
        .collect()
}

pub fn case_study_prescription() -> Prescription {
    let drug = |name: &str, dose: f64, frequency: &str| PrescribedDrug {
        drug: EntityId::new(name),
        dose,
        unit: "mg".into(),
        frequency: frequency.into(),
        route: "oral".into(),
    };
    Prescription {
        id: "case-study".into(),
        patient: PatientProfile {
            age: Some(59.0),
            weight: Some(62.0),
            crcl: Some(95.0),
            hepatic_status: Some(HepaticStatus::None),
            pregnancy: Some(false),
            allergies: Vec::new(),
            conditions: vec![
                EntityId::new("HR-positive HER2-negative metastatic breast cancer"),
                EntityId::new("tuberculosis"),
            ],
            co_medications: Vec::new(),
        },
        drug_list: vec![drug("Abemaciclib", 150.0, "twice daily"), drug("Rifampin", 600.0, "once daily")],
    }
}

pub fn case_study_store(mode: Execution) -> Result<HybridStore, EvalError> {
    let mut store = build_store(&case_study_corpus(), standard_schema(), mode, None)?.store;
    store.seal()?;
    Ok(store)
}

pub fn run_case_study(mode: Execution) -> Result<AuditReport, EvalError> {
    let store = case_study_store(mode)?;
    Ok(Auditor { execution: mode, ..Default::default() }.audit(&case_study_prescription(), &store)?)
}
