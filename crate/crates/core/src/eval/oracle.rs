//! Reference verdicts computed straight from the generator's rules, without
//! touching the store or the audit pipeline.

use std::collections::{BTreeMap, BTreeSet};

use super::generate::{GenRule, SyntheticCorpus};
use crate::pest::{Attribute, PatientProfile};
use crate::query::Category;
use crate::schema::names;
use crate::store::EntityId;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSelection<'a> {
    pub selected: Option<&'a GenRule>,
    pub gaps: BTreeSet<Attribute>,
}

fn status(rule: &GenRule, p: &PatientProfile) -> (bool, Vec<Attribute>) {
    let mut unknown = Vec::new();
    for c in &rule.clauses {
        match c.holds(p) {
            Some(false) => return (false, Vec::new()),
            Some(true) => {}
            None => unknown.push(c.attribute()),
        }
    }
    (true, unknown)
}

/// Most specific fully satisfied rule, first in document order on ties;
/// gaps are the unknown attributes of undecided rules more specific than it.
pub fn reference_selection<'a>(rules: &[&'a GenRule], p: &PatientProfile) -> OracleSelection<'a> {
    let mut selected: Option<&GenRule> = None;
    for r in rules {
        let (alive, unknown) = status(r, p);
        if alive && unknown.is_empty() && selected.is_none_or(|s| r.specificity() > s.specificity()) {
            selected = Some(r);
        }
    }
    let floor = selected.map(|s| s.specificity());
    let gaps = rules
        .iter()
        .filter(|r| floor.is_none_or(|f| r.specificity() > f))
        .flat_map(|r| match status(r, p) {
            (true, unknown) => unknown,
            _ => Vec::new(),
        })
        .collect();
    OracleSelection { selected, gaps }
}

pub fn table_for(category: Category) -> Option<&'static str> {
    match category {
        Category::Indication => Some(names::INDICATIONS),
        Category::Dosage => Some(names::DOSAGE),
        Category::Contraindication => Some(names::CONTRAINDICATIONS),
        Category::SpecialPopulation => Some(names::SPECIAL_POPULATIONS),
        Category::Interaction | Category::Allergy => None,
    }
}

/// Whether the gold graph links `a` and `b` by a direct interaction or
/// through two distinct interacting classes.
pub fn interaction_linked(corpus: &SyntheticCorpus, a: &EntityId, b: &EntityId) -> bool {
    if a == b {
        return false;
    }
    let mut members: BTreeMap<&EntityId, BTreeSet<&EntityId>> = BTreeMap::new();
    let mut class_pairs = BTreeSet::new();
    for e in corpus.all_edges() {
        match e.edge_type.as_str() {
            names::INTERACTS_WITH if (&e.src == a && &e.dst == b) || (&e.src == b && &e.dst == a) => return true,
            names::MEMBER_OF => {
                members.entry(&e.src).or_default().insert(&e.dst);
            }
            names::CLASS_INTERACTS_WITH if e.src != e.dst => {
                class_pairs.insert((&e.src, &e.dst));
                class_pairs.insert((&e.dst, &e.src));
            }
            _ => {}
        }
    }
    let (Some(ca), Some(cb)) = (members.get(a), members.get(b)) else { return false };
    ca.iter().any(|x| cb.iter().any(|y| class_pairs.contains(&(*x, *y))))
}
