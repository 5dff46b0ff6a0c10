//! Planted-error prescriptions with clean twins, and prescriptions with a
//! blanked patient attribute, all derived from a synthetic corpus's gold.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::generate::{safe_profile, GenRule, SyntheticCorpus, SyntheticDoc};
use super::metrics::{micro_average, MetricsResult};
use super::oracle::{interaction_linked, reference_selection, table_for};
use super::EvalError;
use crate::audit::{AuditError, AuditReport, Auditor, Finding, GapKind, PrescribedDrug, Prescription, Verdict};
use crate::par;
use crate::pest::{Attribute, PatientProfile};
use crate::query::Category;
use crate::schema::names;
use crate::store::{EntityId, HybridStore};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlantedCase {
    pub category: Category,
    pub drug: EntityId,
    pub planted: Prescription,
    pub clean: Prescription,
    /// Source lines of the facts a correct finding may cite.
    pub cite_lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlankedCase {
    pub category: Category,
    pub drug: EntityId,
    pub prescription: Prescription,
    pub blanked: Attribute,
    pub expected_gaps: Vec<Attribute>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrescriptionSuite {
    pub seed: u64,
    pub planted: Vec<PlantedCase>,
    pub blanked: Vec<BlankedCase>,
}

/// `n` planted errors for each of the five plantable categories.
pub fn uniform_mix(n: usize) -> Vec<(Category, usize)> {
    Category::PLANTABLE.iter().map(|c| (*c, n)).collect()
}

fn mg(drug: &EntityId, dose: f64, frequency: &str) -> PrescribedDrug {
    PrescribedDrug { drug: drug.clone(), dose, unit: "mg".into(), frequency: frequency.into(), route: "oral".into() }
}

fn rx(id: String, patient: PatientProfile, drug: PrescribedDrug) -> Prescription {
    Prescription { id, patient, drug_list: vec![drug] }
}

/// A within-limit dose for `patient` when the reference selects a dose
/// rule, otherwise a nominal one.
fn safe_dose(doc: &SyntheticDoc, patient: &PatientProfile) -> PrescribedDrug {
    let sel = reference_selection(&doc.rules_in(names::DOSAGE), patient);
    let dose = match (sel.selected.and_then(|r| r.max_daily_mg), sel.gaps.is_empty()) {
        (Some(max), true) => max / 2.0,
        _ => 1.0,
    };
    mg(&doc.drug_id(), dose, "once daily")
}

fn base_patient(rng: &mut ChaCha8Rng, doc: &SyntheticDoc) -> PatientProfile {
    let mut p = safe_profile();
    p.conditions = vec![EntityId::new(doc.indications.choose(rng).expect("every doc has indications"))];
    p
}

fn pick_rule<'a>(rng: &mut ChaCha8Rng, doc: &'a SyntheticDoc, table: &str, nonempty: bool) -> Option<&'a GenRule> {
    let rules: Vec<&GenRule> =
        doc.rules_in(table).into_iter().filter(|r| !nonempty || !r.clauses.is_empty()).collect();
    rules.choose(rng).copied()
}

fn interaction_lines(corpus: &SyntheticCorpus, a: &EntityId, b: &EntityId) -> Vec<String> {
    let mut lines = BTreeSet::new();
    let member_classes: BTreeSet<&EntityId> = corpus
        .all_edges()
        .filter(|e| e.edge_type == names::MEMBER_OF && (&e.src == a || &e.src == b))
        .map(|e| &e.dst)
        .collect();
    for e in corpus.all_edges() {
        let hit = match e.edge_type.as_str() {
            names::INTERACTS_WITH => (&e.src == a && &e.dst == b) || (&e.src == b && &e.dst == a),
            names::CLASS_INTERACTS_WITH => member_classes.contains(&e.src) && member_classes.contains(&e.dst),
            names::MEMBER_OF => &e.src == a || &e.src == b,
            _ => false,
        };
        if hit {
            lines.insert(e.line.clone());
        }
    }
    lines.into_iter().collect()
}

fn plant(
    rng: &mut ChaCha8Rng,
    corpus: &SyntheticCorpus,
    category: Category,
    id: &str,
) -> Option<PlantedCase> {
    let doc = corpus.docs.choose(rng)?;
    let a = doc.drug_id();
    let mut patient = base_patient(rng, doc);
    let mut clean_patient = patient.clone();
    let mut clean_co_meds = Vec::new();
    let (dose, cite_lines) = match category {
        Category::Indication => {
            let others: Vec<&String> = corpus
                .docs
                .iter()
                .flat_map(|d| &d.indications)
                .filter(|i| !doc.indications.contains(i))
                .collect();
            patient.conditions = vec![EntityId::new(others.choose(rng)?)];
            let rules = doc.rules_in(names::INDICATIONS);
            if reference_selection(&rules, &patient).selected.is_some() {
                return None;
            }
            (safe_dose(doc, &patient), rules.iter().map(|r| r.line.clone()).collect())
        }
        Category::Dosage => {
            let r = pick_rule(rng, doc, names::DOSAGE, false)?;
            r.clauses.iter().for_each(|c| c.satisfy(&mut patient));
            let sel = reference_selection(&doc.rules_in(names::DOSAGE), &patient);
            let s = sel.selected.filter(|_| sel.gaps.is_empty())?;
            (mg(&a, s.max_daily_mg?, "twice daily"), vec![s.line.clone()])
        }
        Category::Contraindication | Category::SpecialPopulation => {
            let table = table_for(category)?;
            let r = pick_rule(rng, doc, table, true)?;
            r.clauses.iter().for_each(|c| c.satisfy(&mut patient));
            let sel = reference_selection(&doc.rules_in(table), &patient);
            let s = sel.selected.filter(|_| sel.gaps.is_empty())?;
            (safe_dose(doc, &patient), vec![s.line.clone()])
        }
        Category::Interaction => {
            let mut others: Vec<EntityId> = corpus.docs.iter().map(|d| d.drug_id()).filter(|d| d != &a).collect();
            others.shuffle(rng);
            let b = others.iter().find(|b| interaction_linked(corpus, &a, b))?.clone();
            let c = others.iter().find(|c| !interaction_linked(corpus, &a, c))?.clone();
            patient.co_medications = vec![b.clone()];
            clean_co_meds.push(c);
            (safe_dose(doc, &patient), interaction_lines(corpus, &a, &b))
        }
        Category::Allergy => return None,
    };
    clean_patient.co_medications = clean_co_meds;
    let clean_dose = safe_dose(doc, &clean_patient);
    Some(PlantedCase {
        category,
        drug: a,
        planted: rx(id.to_string(), patient, dose),
        clean: rx(format!("{id}-clean"), clean_patient, clean_dose),
        cite_lines,
    })
}

fn blank(rng: &mut ChaCha8Rng, corpus: &SyntheticCorpus, id: &str) -> Option<BlankedCase> {
    let category = *[Category::Dosage, Category::Contraindication, Category::SpecialPopulation].choose(rng)?;
    let table = table_for(category)?;
    let doc = corpus.docs.choose(rng)?;
    let r = pick_rule(rng, doc, table, true)?;
    let attrs: Vec<Attribute> =
        r.clauses.iter().map(|c| c.attribute()).filter(|a| Attribute::BLANKABLE.contains(a)).collect();
    let blanked = *attrs.choose(rng)?;
    let mut patient = base_patient(rng, doc);
    r.clauses.iter().for_each(|c| c.satisfy(&mut patient));
    patient.blank(blanked);
    let gaps = reference_selection(&doc.rules_in(table), &patient).gaps;
    if gaps.is_empty() {
        return None;
    }
    let dose = safe_dose(doc, &patient);
    Some(BlankedCase {
        category,
        drug: doc.drug_id(),
        prescription: rx(id.to_string(), patient, dose),
        blanked,
        expected_gaps: gaps.into_iter().collect(),
    })
}

const ATTEMPTS: usize = 1000;

/// Draws planted cases per `mix` and `n_blanked` blanked-attribute cases.
/// Fails with `InsufficientKb` when a category cannot be planted.
pub fn generate_prescriptions(
    seed: u64,
    corpus: &SyntheticCorpus,
    mix: &[(Category, usize)],
    n_blanked: usize,
) -> Result<PrescriptionSuite, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut planted = Vec::new();
    for &(category, n) in mix {
        let tag = format!("{category:?}").to_lowercase();
        for i in 0..n {
            let id = format!("rx-{tag}-{i:03}");
            let case = (0..ATTEMPTS)
                .find_map(|_| plant(&mut rng, corpus, category, &id))
                .ok_or_else(|| EvalError::InsufficientKb(format!("no {category:?} fact to violate")))?;
            planted.push(case);
        }
    }
    let mut blanked = Vec::new();
    for i in 0..n_blanked {
        let id = format!("rx-blank-{i:03}");
        let case = (0..ATTEMPTS)
            .find_map(|_| blank(&mut rng, corpus, &id))
            .ok_or_else(|| EvalError::InsufficientKb("no conditional rule to blank".into()))?;
        blanked.push(case);
    }
    Ok(PrescriptionSuite { seed, planted, blanked })
}

#[derive(Debug, Clone, Serialize)]
pub struct SafetyOutcome {
    /// tp: planted errors found with a correct citation; fn: the rest;
    /// fp: clean twins flagged in the planted category.
    pub overall: MetricsResult,
    pub per_category: BTreeMap<Category, MetricsResult>,
    pub missed: Vec<String>,
    /// Every Violation finding on any clean twin.
    pub clean_violations: Vec<String>,
    pub blanked_total: usize,
    pub blanked_failures: Vec<String>,
    #[serde(skip)]
    pub reports: Vec<AuditReport>,
}

impl SafetyOutcome {
    pub fn passed(&self) -> bool {
        self.missed.is_empty() && self.clean_violations.is_empty() && self.blanked_failures.is_empty()
    }
}

fn target<'r>(report: &'r AuditReport, category: Category, drug: &EntityId) -> Option<&'r Finding> {
    report.findings.iter().find(|f| f.category == category && &f.drugs[0] == drug)
}

fn check_planted(case: &PlantedCase, report: &AuditReport) -> Result<(), String> {
    let f = target(report, case.category, &case.drug)
        .ok_or_else(|| format!("{}: no {:?} finding", case.planted.id, case.category))?;
    if f.verdict != Verdict::Violation {
        return Err(format!("{}: {:?} verdict {:?}: {}", case.planted.id, case.category, f.verdict, f.explanation));
    }
    if !f.evidence.iter().any(|e| case.cite_lines.contains(&e.prov.source_text)) {
        return Err(format!("{}: violation cites none of the planted facts", case.planted.id));
    }
    Ok(())
}

fn check_blanked(case: &BlankedCase, report: &AuditReport) -> Result<(), String> {
    let id = &case.prescription.id;
    let f = target(report, case.category, &case.drug).ok_or_else(|| format!("{id}: no {:?} finding", case.category))?;
    if f.verdict != Verdict::Unverifiable {
        return Err(format!("{id}: blanked {} but verdict {:?}", case.blanked, f.verdict));
    }
    let got: Vec<&str> = report
        .gaps
        .iter()
        .filter(|g| g.kind == GapKind::PatientAttribute && g.tasks.contains(&f.task_id))
        .map(|g| g.attribute.as_str())
        .collect();
    let want: Vec<&str> = case.expected_gaps.iter().map(|a| a.name()).collect();
    let mut sorted = got.clone();
    sorted.sort();
    let mut want_sorted = want.clone();
    want_sorted.sort();
    if sorted != want_sorted {
        return Err(format!("{id}: gaps {got:?}, expected {want:?}"));
    }
    Ok(())
}

/// Audits every prescription of the suite against a sealed store and
/// scores the outcome.
pub fn run_safety_suite(
    store: &HybridStore,
    suite: &PrescriptionSuite,
    auditor: &Auditor<'_>,
) -> Result<SafetyOutcome, AuditError> {
    let run = |p: &Prescription| auditor.audit(p, store);
    let planted: Vec<_> = par::map(auditor.execution, &suite.planted, |c| Ok::<_, AuditError>((run(&c.planted)?, run(&c.clean)?)));
    let blanked: Vec<_> = par::map(auditor.execution, &suite.blanked, |c| run(&c.prescription));

    let mut counts: BTreeMap<Category, (usize, usize, usize)> = BTreeMap::new();
    let mut missed = Vec::new();
    let mut clean_violations = Vec::new();
    let mut reports = Vec::new();
    for (case, res) in suite.planted.iter().zip(planted) {
        let (bad, good) = res?;
        let entry = counts.entry(case.category).or_default();
        match check_planted(case, &bad) {
            Ok(()) => entry.0 += 1,
            Err(why) => {
                entry.2 += 1;
                missed.push(why);
            }
        }
        if target(&good, case.category, &case.drug).is_some_and(|f| f.verdict == Verdict::Violation) {
            entry.1 += 1;
        }
        for f in good.findings.iter().filter(|f| f.verdict == Verdict::Violation) {
            clean_violations.push(format!("{}: {} {:?}: {}", good.prescription_id, f.task_id, f.category, f.explanation));
        }
        reports.push(bad);
        reports.push(good);
    }
    let mut blanked_failures = Vec::new();
    for (case, res) in suite.blanked.iter().zip(blanked) {
        let report = res?;
        if let Err(why) = check_blanked(case, &report) {
            blanked_failures.push(why);
        }
        reports.push(report);
    }
    let per_category: BTreeMap<Category, MetricsResult> =
        counts.into_iter().map(|(c, (tp, fp, fn_))| (c, MetricsResult::from_counts(tp, fp, fn_))).collect();
    let overall = micro_average(&per_category.values().copied().collect::<Vec<_>>());
    Ok(SafetyOutcome {
        overall,
        per_category,
        missed,
        clean_violations,
        blanked_total: suite.blanked.len(),
        blanked_failures,
        reports,
    })
}
