use std::collections::{BTreeMap, BTreeSet};

use super::{Curated, FactRef, Finding, Gap, GapKind, Prescription, SeverityTable, TaskEvidence, Verdict};
use crate::pest::Selection;
use crate::query::Category;
use crate::store::EntityId;
use crate::value::fmt_num;

/// Verdict for one task before evidence items are attached.
pub(crate) struct Outcome {
    pub verdict: Verdict,
    pub explanation: String,
    pub cite: Vec<String>,
    pub gaps: Vec<(GapKind, String, Vec<String>)>,
}

impl Outcome {
    fn pass(explanation: String, cite: Vec<String>) -> Self {
        Outcome { verdict: Verdict::Pass, explanation, cite, gaps: Vec::new() }
    }

    fn violation(explanation: String, cite: Vec<String>) -> Self {
        Outcome { verdict: Verdict::Violation, explanation, cite, gaps: Vec::new() }
    }

    fn unverifiable(explanation: String, kind: GapKind, attribute: String, rules: Vec<String>) -> Self {
        Outcome { verdict: Verdict::Unverifiable, explanation, cite: Vec::new(), gaps: vec![(kind, attribute, rules)] }
    }
}

fn ids_for(te: &TaskEvidence, rules: &[crate::pest::RuleRef]) -> Vec<String> {
    rules
        .iter()
        .filter_map(|r| te.item_for(&FactRef::Row { table: r.table.clone(), key: r.key }))
        .map(|i| i.id.clone())
        .collect()
}

fn coverage(drug: &EntityId, why: &str) -> Outcome {
    Outcome::unverifiable(format!("{drug}: {why}"), GapKind::KbCoverage, format!("kb:{drug}"), Vec::new())
}

fn selected_ref(sel: &Selection) -> Vec<crate::pest::RuleRef> {
    sel.selected.iter().map(|s| s.rule.clone()).collect()
}

fn judge_rules(p: &Prescription, te: &TaskEvidence, retrieved: usize, sel: &Selection) -> Outcome {
    let drug = &te.task.drugs[0];
    if !sel.gaps.is_empty() {
        let rules: Vec<String> = sel.blocked.iter().map(|r| r.to_string()).collect();
        let names: Vec<&str> = sel.gaps.iter().map(|a| a.name()).collect();
        return Outcome {
            verdict: Verdict::Unverifiable,
            explanation: format!("rules {} need unknown {}", rules.join(", "), names.join(", ")),
            cite: ids_for(te, &sel.blocked),
            gaps: sel
                .gaps
                .iter()
                .map(|a| (GapKind::PatientAttribute, a.name().to_string(), rules.clone()))
                .collect(),
        };
    }
    match te.task.category {
        Category::Dosage => {
            if retrieved == 0 {
                return coverage(drug, "no dose rules");
            }
            let Some(rule) = &sel.selected else {
                return coverage(drug, "no dose rule applies to this patient");
            };
            let Some(max) = rule.payload.get("max_daily_dose").and_then(|v| v.as_f64()) else {
                return coverage(drug, "selected dose rule has no daily limit");
            };
            let cite = ids_for(te, &selected_ref(sel));
            let daily = match p.prescribed(drug).map(|d| d.daily_mg()) {
                Some(Ok(x)) => x,
                Some(Err(e)) => {
                    return Outcome::unverifiable(
                        format!("{drug}: {e}"),
                        GapKind::PrescriptionInput,
                        format!("dose:{drug}"),
                        vec![rule.rule.to_string()],
                    )
                }
                None => return coverage(drug, "not on the drug list"),
            };
            if daily > max * (1.0 + 1e-9) {
                Outcome::violation(
                    format!("prescribed {} mg/day exceeds the {} mg/day limit of {}", fmt_num(daily), fmt_num(max), rule.rule),
                    cite,
                )
            } else {
                Outcome::pass(
                    format!("prescribed {} mg/day within the {} mg/day limit of {}", fmt_num(daily), fmt_num(max), rule.rule),
                    cite,
                )
            }
        }
        Category::Contraindication | Category::SpecialPopulation => match &sel.selected {
            Some(rule) => {
                let what = rule
                    .payload
                    .get("population")
                    .or_else(|| rule.payload.get("recommendation"))
                    .map(|v| format!(" ({v})"))
                    .unwrap_or_default();
                Outcome::violation(
                    format!("{} applies to this patient{what}", rule.rule),
                    ids_for(te, &selected_ref(sel)),
                )
            }
            None => Outcome::pass(format!("none of {retrieved} rule(s) applies to this patient"), Vec::new()),
        },
        Category::Indication => {
            if retrieved == 0 {
                return coverage(drug, "no indications recorded");
            }
            if p.patient.conditions.is_empty() {
                let rules: Vec<String> = te.items.iter().map(|i| i.fact.to_string()).collect();
                return Outcome::unverifiable(
                    format!("{drug}: patient has no recorded conditions"),
                    GapKind::PatientAttribute,
                    "conditions".into(),
                    rules,
                );
            }
            match &sel.selected {
                Some(rule) => Outcome::pass(format!("indicated per {}", rule.rule), ids_for(te, &selected_ref(sel))),
                None => Outcome::violation(
                    format!("no recorded indication of {drug} matches the patient's conditions"),
                    te.items.iter().map(|i| i.id.clone()).collect(),
                ),
            }
        }
        Category::Interaction | Category::Allergy => unreachable!("topology categories do not curate rules"),
    }
}

fn judge_paths(p: &Prescription, te: &TaskEvidence, paths: &[crate::query::Path]) -> Outcome {
    let cite_edges = |edges: BTreeSet<crate::store::EdgeId>| -> Vec<String> {
        te.items
            .iter()
            .filter(|i| matches!(&i.fact, FactRef::Edge { id, .. } if edges.contains(id)))
            .map(|i| i.id.clone())
            .collect()
    };
    match te.task.category {
        Category::Interaction => {
            let (a, b) = (&te.task.drugs[0], &te.task.drugs[1]);
            if paths.is_empty() {
                Outcome::pass(format!("no interaction path between {a} and {b}"), Vec::new())
            } else {
                let edges = paths.iter().flat_map(|p| p.edges.iter().copied()).collect();
                Outcome::violation(format!("{a} interacts with {b} ({} supporting path(s))", paths.len()), cite_edges(edges))
            }
        }
        Category::Allergy => {
            let drug = &te.task.drugs[0];
            let allergies = &p.patient.allergies;
            let hits: Vec<_> = paths.iter().filter(|path| path.nodes.iter().any(|n| allergies.contains(n))).collect();
            if !hits.is_empty() {
                let mut allergens: Vec<&str> = hits
                    .iter()
                    .flat_map(|path| path.nodes.iter().filter(|n| allergies.contains(n)).map(|n| n.as_str()))
                    .collect();
                allergens.sort();
                allergens.dedup();
                let edges = hits.iter().flat_map(|p| p.edges.iter().copied()).collect();
                Outcome::violation(format!("{drug} reaches recorded allergen {}", allergens.join(", ")), cite_edges(edges))
            } else if allergies.contains(drug) {
                coverage(drug, "patient is allergic to the drug itself but the graph has no composition to cite")
            } else {
                Outcome::pass(format!("no recorded allergen reachable from {drug}"), Vec::new())
            }
        }
        _ => unreachable!("constraint categories do not traverse"),
    }
}

pub(crate) fn judge(p: &Prescription, te: &TaskEvidence) -> Outcome {
    match &te.curated {
        Curated::Unresolved { gap, attribute, detail } => {
            Outcome::unverifiable(detail.clone(), *gap, attribute.clone(), Vec::new())
        }
        Curated::Rules { retrieved, selection } => judge_rules(p, te, *retrieved, selection),
        Curated::Paths { paths } => judge_paths(p, te, paths),
    }
}

/// Attaches cited items and severities, and folds per-task gaps into the
/// gap list in first-seen order.
pub(crate) fn assemble(package: &[TaskEvidence], outcomes: Vec<Outcome>, severity: &SeverityTable) -> (Vec<Finding>, Vec<Gap>) {
    let mut findings = Vec::new();
    let mut gaps: Vec<Gap> = Vec::new();
    let mut index: BTreeMap<(GapKind, String), usize> = BTreeMap::new();
    for (te, o) in package.iter().zip(outcomes) {
        for (kind, attribute, rules) in o.gaps {
            let at = *index.entry((kind, attribute.clone())).or_insert_with(|| {
                gaps.push(Gap { attribute, kind, tasks: Vec::new(), triggering_rules: Vec::new() });
                gaps.len() - 1
            });
            let g = &mut gaps[at];
            if !g.tasks.contains(&te.task.id) {
                g.tasks.push(te.task.id.clone());
            }
            for r in rules {
                if !g.triggering_rules.contains(&r) {
                    g.triggering_rules.push(r);
                }
            }
        }
        let evidence = te.items.iter().filter(|i| o.cite.contains(&i.id)).cloned().collect();
        findings.push(Finding {
            task_id: te.task.id.clone(),
            category: te.task.category,
            drugs: te.task.drugs.clone(),
            verdict: o.verdict,
            severity: (o.verdict != Verdict::Pass).then(|| severity.get(te.task.category)),
            explanation: o.explanation,
            evidence,
        });
    }
    (findings, gaps)
}

/// The deterministic synthesizer: compares the prescription against the
/// curated evidence of every task, in plan order.
pub fn synthesize(p: &Prescription, package: &[TaskEvidence], severity: &SeverityTable) -> (Vec<Finding>, Vec<Gap>) {
    let outcomes = package.iter().map(|te| judge(p, te)).collect();
    assemble(package, outcomes, severity)
}
