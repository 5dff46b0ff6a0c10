use serde::{Deserialize, Serialize};

use super::{EvidenceItem, FactRef, GapKind};
use crate::pest::{select_evidence, CandidateRule, PatientProfile, Selection};
use crate::query::{
    check_subjects, execute_constraint, execute_traversal, generate_query, render_trace, HybridQuery, Path,
    QueryError, RowHit, VerificationTask,
};
use crate::store::{EntityId, HybridStore};

/// Outcome of retrieval and curation for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Curated {
    Rules { retrieved: usize, selection: Selection },
    Paths { paths: Vec<Path> },
    Unresolved { gap: GapKind, attribute: String, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEvidence {
    pub task: VerificationTask,
    pub trace: Option<String>,
    pub curated: Curated,
    pub items: Vec<EvidenceItem>,
}

impl TaskEvidence {
    pub fn item_for(&self, fact: &FactRef) -> Option<&EvidenceItem> {
        self.items.iter().find(|i| &i.fact == fact)
    }
}

fn unresolved(task: &VerificationTask, trace: Option<String>, gap: GapKind, attribute: String, detail: String) -> TaskEvidence {
    TaskEvidence { task: task.clone(), trace, curated: Curated::Unresolved { gap, attribute, detail }, items: Vec::new() }
}

fn coverage(task: &VerificationTask, trace: Option<String>, drug: &EntityId, detail: String) -> TaskEvidence {
    unresolved(task, trace, GapKind::KbCoverage, format!("kb:{drug}"), detail)
}

fn rule_rationale(rule: &CandidateRule, sel: &Selection, profile: &PatientProfile) -> String {
    let preds = if rule.predicates.is_empty() {
        "unconditional".to_string()
    } else {
        rule.predicates.iter().map(|p| p.describe()).collect::<Vec<_>>().join(" and ")
    };
    let spec = rule.specificity();
    if sel.selected.as_ref().is_some_and(|s| s.rule == rule.rule) {
        return format!("selected: most specific applicable rule, specificity {spec} ({preds})");
    }
    let unknown: Vec<_> = rule
        .predicates
        .iter()
        .filter(|p| p.eval(profile).is_none())
        .map(|p| p.attribute().name())
        .collect();
    if sel.blocked.contains(&rule.rule) {
        return format!("blocked: specificity {spec} ({preds}) needs unknown {}", unknown.join(", "));
    }
    if sel.applicable.contains(&rule.rule) {
        return format!("applicable, outranked by the selected rule ({preds})");
    }
    match rule.predicates.iter().find(|p| p.eval(profile) == Some(false)) {
        Some(p) => format!("not applicable: {} does not hold", p.describe()),
        None => format!("not considered: needs unknown {} but does not outrank the selection", unknown.join(", ")),
    }
}

fn curate_rules(
    task: &VerificationTask,
    trace: String,
    hits: Vec<RowHit>,
    profile: &PatientProfile,
) -> TaskEvidence {
    let rules = match hits.iter().map(CandidateRule::from_hit).collect::<Result<Vec<_>, _>>() {
        Ok(r) => r,
        Err(e) => return coverage(task, Some(trace), &task.drugs[0], format!("unusable rule: {e}")),
    };
    let selection = match select_evidence(profile, &rules) {
        Ok(s) => s,
        Err(e) => return coverage(task, Some(trace), &task.drugs[0], e.to_string()),
    };
    let items = rules
        .iter()
        .enumerate()
        .map(|(i, r)| EvidenceItem {
            id: format!("{}.E{}", task.id, i + 1),
            fact: FactRef::Row { table: r.rule.table.clone(), key: r.rule.key },
            prov: r.prov.clone(),
            query_trace: trace.clone(),
            rationale: rule_rationale(r, &selection, profile),
        })
        .collect();
    TaskEvidence {
        task: task.clone(),
        trace: Some(trace),
        curated: Curated::Rules { retrieved: rules.len(), selection },
        items,
    }
}

fn describe_path(store: &HybridStore, p: &Path) -> String {
    let g = store.graph();
    let mut s = p.nodes[0].to_string();
    for (e, n) in p.edges.iter().zip(&p.nodes[1..]) {
        let ty = g.edge_by_id(*e).map_or("?", |e| e.edge_type.as_str());
        s.push_str(&format!(" -[{ty}]- {n}"));
    }
    s
}

fn curate_paths(store: &HybridStore, task: &VerificationTask, trace: String, q: &HybridQuery) -> TaskEvidence {
    let HybridQuery::Topology(patterns) = q else { unreachable!("topology tasks compile to traversals") };
    let mut paths = Vec::new();
    for pat in patterns {
        match execute_traversal(store, pat) {
            Ok(found) => paths.extend(found),
            Err(e) => return coverage(task, Some(trace), &task.drugs[0], e.to_string()),
        }
    }
    let g = store.graph();
    let mut items: Vec<EvidenceItem> = Vec::new();
    for p in &paths {
        for id in &p.edges {
            let e = g.edge_by_id(*id).expect("paths reference stored edges");
            let fact = FactRef::Edge {
                id: *id,
                edge_type: e.edge_type.clone(),
                src: g.vertices()[e.src as usize].id.clone(),
                dst: g.vertices()[e.dst as usize].id.clone(),
            };
            if items.iter().any(|i| i.fact == fact) {
                continue;
            }
            items.push(EvidenceItem {
                id: format!("{}.E{}", task.id, items.len() + 1),
                fact,
                prov: e.prov.clone(),
                query_trace: trace.clone(),
                rationale: format!("on matched path {}", describe_path(store, p)),
            });
        }
    }
    TaskEvidence { task: task.clone(), trace: Some(trace), curated: Curated::Paths { paths }, items }
}

/// Runs one task's query and curates the result. Never fails: problems come
/// back as [`Curated::Unresolved`].
pub fn curate(store: &HybridStore, profile: &PatientProfile, task: &VerificationTask) -> TaskEvidence {
    if let Err(QueryError::UnknownDrug(d)) = check_subjects(store, task) {
        return coverage(task, None, &d, format!("{d} has no knowledge base entry"));
    }
    let q = match generate_query(task) {
        Ok(q) => q,
        Err(e) => return unresolved(task, None, GapKind::PrescriptionInput, "task".into(), e.to_string()),
    };
    let trace = render_trace(&q);
    match &q {
        HybridQuery::Constraint(cq) => match execute_constraint(store, cq) {
            Ok(hits) => curate_rules(task, trace, hits, profile),
            Err(e) => coverage(task, Some(trace), &task.drugs[0], e.to_string()),
        },
        HybridQuery::Topology(_) => {
            if let Some(d) = task.drugs.iter().find(|d| store.graph().vertex_index(d).is_none()) {
                if task.category == crate::query::Category::Interaction {
                    return coverage(task, Some(trace), d, format!("{d} has no graph entry"));
                }
            }
            curate_paths(store, task, trace, &q)
        }
    }
}
