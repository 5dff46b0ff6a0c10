//! Patient-profile-driven evidence selection.
//!
//! Given the rows retrieved for one (drug, category), pick the single most
//! specific rule whose every condition is satisfied by a known patient
//! attribute. Rules that would have outranked it but reference unknown
//! attributes are reported as blocked, and their unknown attributes become
//! information gaps.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::query::RowHit;
use crate::schema::HEPATIC_LEVELS;
use crate::store::{EntityId, Provenance, RowKey};
use crate::value::{NumRange, Value};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PestError {
    #[error("rule set mixes {0} and {1}")]
    MixedRuleSet(String, String),
    #[error("invalid patient profile: {0}")]
    InvalidProfile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HepaticStatus {
    None,
    Mild,
    Moderate,
    Severe,
}

impl HepaticStatus {
    pub fn parse(s: &str) -> Option<Self> {
        match HEPATIC_LEVELS.iter().position(|l| l.eq_ignore_ascii_case(s))? {
            0 => Some(HepaticStatus::None),
            1 => Some(HepaticStatus::Mild),
            2 => Some(HepaticStatus::Moderate),
            _ => Some(HepaticStatus::Severe),
        }
    }

    pub fn name(self) -> &'static str {
        HEPATIC_LEVELS[self as usize]
    }
}

/// Patient attributes. `None` means unknown and is never defaulted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PatientProfile {
    #[serde(default)]
    pub age: Option<f64>,
    #[serde(default)]
    pub weight: Option<f64>,
    #[serde(default)]
    pub crcl: Option<f64>,
    #[serde(default)]
    pub hepatic_status: Option<HepaticStatus>,
    #[serde(default)]
    pub pregnancy: Option<bool>,
    #[serde(default)]
    pub allergies: Vec<EntityId>,
    #[serde(default)]
    pub conditions: Vec<EntityId>,
    #[serde(default)]
    pub co_medications: Vec<EntityId>,
}

impl PatientProfile {
    pub fn validate(&self) -> Result<(), PestError> {
        for (name, v) in [("age", self.age), ("weight", self.weight), ("crcl", self.crcl)] {
            if let Some(x) = v {
                if !x.is_finite() || x < 0.0 {
                    return Err(PestError::InvalidProfile(format!("{name} = {x}")));
                }
            }
        }
        Ok(())
    }

    pub fn is_known(&self, a: Attribute) -> bool {
        match a {
            Attribute::Age => self.age.is_some(),
            Attribute::Weight => self.weight.is_some(),
            Attribute::Crcl => self.crcl.is_some(),
            Attribute::HepaticStatus => self.hepatic_status.is_some(),
            Attribute::Pregnancy => self.pregnancy.is_some(),
            Attribute::Conditions => true,
        }
    }

    /// Marks one attribute unknown. Conditions cannot be blanked.
    pub fn blank(&mut self, a: Attribute) {
        match a {
            Attribute::Age => self.age = None,
            Attribute::Weight => self.weight = None,
            Attribute::Crcl => self.crcl = None,
            Attribute::HepaticStatus => self.hepatic_status = None,
            Attribute::Pregnancy => self.pregnancy = None,
            Attribute::Conditions => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Age,
    Weight,
    Crcl,
    HepaticStatus,
    Pregnancy,
    Conditions,
}

impl Attribute {
    pub const BLANKABLE: [Attribute; 5] = [
        Attribute::Age,
        Attribute::Weight,
        Attribute::Crcl,
        Attribute::HepaticStatus,
        Attribute::Pregnancy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Age => "age",
            Attribute::Weight => "weight",
            Attribute::Crcl => "crcl",
            Attribute::HepaticStatus => "hepatic_status",
            Attribute::Pregnancy => "pregnancy",
            Attribute::Conditions => "conditions",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One bound condition of a rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "on", content = "value", rename_all = "snake_case")]
pub enum RulePredicate {
    Age(NumRange),
    Weight(NumRange),
    Crcl(NumRange),
    /// Satisfied when the patient's hepatic impairment is at least this level.
    HepaticAtLeast(HepaticStatus),
    Pregnancy(bool),
    HasCondition(EntityId),
}

impl RulePredicate {
    pub fn attribute(&self) -> Attribute {
        match self {
            RulePredicate::Age(_) => Attribute::Age,
            RulePredicate::Weight(_) => Attribute::Weight,
            RulePredicate::Crcl(_) => Attribute::Crcl,
            RulePredicate::HepaticAtLeast(_) => Attribute::HepaticStatus,
            RulePredicate::Pregnancy(_) => Attribute::Pregnancy,
            RulePredicate::HasCondition(_) => Attribute::Conditions,
        }
    }

    /// `None` when the referenced attribute is unknown.
    pub fn eval(&self, p: &PatientProfile) -> Option<bool> {
        match self {
            RulePredicate::Age(r) => p.age.map(|x| r.contains(x)),
            RulePredicate::Weight(r) => p.weight.map(|x| r.contains(x)),
            RulePredicate::Crcl(r) => p.crcl.map(|x| r.contains(x)),
            RulePredicate::HepaticAtLeast(min) => p.hepatic_status.map(|h| h >= *min),
            RulePredicate::Pregnancy(b) => p.pregnancy.map(|x| x == *b),
            RulePredicate::HasCondition(c) => Some(p.conditions.contains(c)),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            RulePredicate::Age(r) => format!("age in {r}"),
            RulePredicate::Weight(r) => format!("weight in {r}"),
            RulePredicate::Crcl(r) => format!("crcl in {r}"),
            RulePredicate::HepaticAtLeast(h) => format!("hepatic_status >= {}", h.name()),
            RulePredicate::Pregnancy(b) => format!("pregnancy = {b}"),
            RulePredicate::HasCondition(c) => format!("has condition {c:?}", c = c.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RuleRef {
    pub table: String,
    pub key: RowKey,
}

impl fmt::Display for RuleRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.table, self.key)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRule {
    pub rule: RuleRef,
    pub drug: EntityId,
    pub prov: Provenance,
    pub predicates: Vec<RulePredicate>,
    /// Non-condition columns (dose limits, recommendation text, ...).
    pub payload: BTreeMap<String, Value>,
}

impl CandidateRule {
    pub fn specificity(&self) -> usize {
        self.predicates.len()
    }

    /// Splits a retrieved row into bound predicates and payload.
    pub fn from_hit(hit: &RowHit) -> Result<CandidateRule, String> {
        let mut predicates = Vec::new();
        let mut payload = BTreeMap::new();
        let mut drug = None;
        for (col, v) in &hit.values {
            if v.is_null() {
                continue;
            }
            let range = || v.as_range().copied().ok_or_else(|| format!("{col} is not a range"));
            match col.as_str() {
                "drug" => drug = v.as_str().map(EntityId::raw),
                "age_range" => predicates.push(RulePredicate::Age(range()?)),
                "weight_range" => predicates.push(RulePredicate::Weight(range()?)),
                "crcl_range" => predicates.push(RulePredicate::Crcl(range()?)),
                "hepatic_min" => {
                    let level = v
                        .as_str()
                        .and_then(HepaticStatus::parse)
                        .ok_or_else(|| format!("bad hepatic level {v}"))?;
                    predicates.push(RulePredicate::HepaticAtLeast(level));
                }
                "pregnancy" => predicates.push(RulePredicate::Pregnancy(
                    v.as_bool().ok_or_else(|| "pregnancy is not boolean".to_string())?,
                )),
                "condition" | "indication" => predicates.push(RulePredicate::HasCondition(
                    EntityId::raw(v.as_str().ok_or_else(|| format!("{col} is not text"))?),
                )),
                _ => {
                    payload.insert(col.clone(), v.clone());
                }
            }
        }
        Ok(CandidateRule {
            rule: RuleRef { table: hit.table.clone(), key: hit.key },
            drug: drug.ok_or_else(|| "row has no drug".to_string())?,
            prov: hit.prov.clone(),
            predicates,
            payload,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub selected: Option<CandidateRule>,
    pub gaps: Vec<Attribute>,
    /// Rules whose every predicate holds on known attributes, in input order.
    pub applicable: Vec<RuleRef>,
    /// Rules outranking the selection that only unknown attributes kept out.
    pub blocked: Vec<RuleRef>,
}

enum Status {
    Applicable,
    Failed,
    Unknown(Vec<Attribute>),
}

fn status(rule: &CandidateRule, p: &PatientProfile) -> Status {
    let mut unknown = Vec::new();
    for pred in &rule.predicates {
        match pred.eval(p) {
            Some(true) => {}
            Some(false) => return Status::Failed,
            None => unknown.push(pred.attribute()),
        }
    }
    if unknown.is_empty() {
        Status::Applicable
    } else {
        Status::Unknown(unknown)
    }
}

/// Selects the most specific applicable rule (ties: lowest row key) and
/// reports the gaps that blocked more specific rules.
pub fn select_evidence(profile: &PatientProfile, rules: &[CandidateRule]) -> Result<Selection, PestError> {
    if let Some(first) = rules.first() {
        for r in rules {
            if r.drug != first.drug || r.rule.table != first.rule.table {
                return Err(PestError::MixedRuleSet(
                    format!("{}/{}", first.drug, first.rule.table),
                    format!("{}/{}", r.drug, r.rule.table),
                ));
            }
        }
    }
    let mut applicable: Vec<&CandidateRule> = Vec::new();
    let mut unknown: Vec<(&CandidateRule, Vec<Attribute>)> = Vec::new();
    for r in rules {
        match status(r, profile) {
            Status::Applicable => applicable.push(r),
            Status::Unknown(attrs) => unknown.push((r, attrs)),
            Status::Failed => {}
        }
    }
    let selected = applicable
        .iter()
        .copied()
        .max_by(|a, b| a.specificity().cmp(&b.specificity()).then_with(|| b.rule.cmp(&a.rule)));
    let floor = selected.map(CandidateRule::specificity);
    let blocked: Vec<_> = unknown
        .into_iter()
        .filter(|(r, _)| floor.is_none_or(|f| r.specificity() > f))
        .collect();
    let mut gaps: Vec<Attribute> = blocked.iter().flat_map(|(_, a)| a.iter().copied()).collect();
    gaps.sort();
    gaps.dedup();
    Ok(Selection {
        selected: selected.cloned(),
        gaps,
        applicable: applicable.iter().map(|r| r.rule.clone()).collect(),
        blocked: blocked.iter().map(|(r, _)| r.rule.clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule(key: u64, predicates: Vec<RulePredicate>) -> CandidateRule {
        CandidateRule {
            rule: RuleRef { table: "DosageRules".into(), key: RowKey(key) },
            drug: EntityId::new("Metformin"),
            prov: Provenance::new("d", "Dosage", &format!("rule {key}")),
            predicates,
            payload: BTreeMap::new(),
        }
    }

    #[test]
    fn most_specific_rule_wins() {
        // inclusive lower age bound: a 65-year-old satisfies the age clause
        let rules = vec![
            rule(1, vec![]),
            rule(2, vec![RulePredicate::Crcl(NumRange::below(30.0))]),
            rule(3, vec![RulePredicate::Age(NumRange::at_least(65.0)), RulePredicate::Crcl(NumRange::below(30.0))]),
        ];
        let p = PatientProfile { age: Some(65.0), crcl: Some(25.0), ..Default::default() };
        let s = select_evidence(&p, &rules).unwrap();
        assert_eq!(s.selected.unwrap().rule.key, RowKey(3));
        assert!(s.gaps.is_empty());
    }

    #[test]
    fn unknown_crcl_falls_back_with_gap() {
        let rules = vec![rule(1, vec![]), rule(2, vec![RulePredicate::Crcl(NumRange::below(30.0))])];
        let p = PatientProfile { age: Some(40.0), ..Default::default() };
        let s = select_evidence(&p, &rules).unwrap();
        assert_eq!(s.selected.unwrap().rule.key, RowKey(1));
        assert_eq!(s.gaps, vec![Attribute::Crcl]);
        assert_eq!(s.blocked, vec![RuleRef { table: "DosageRules".into(), key: RowKey(2) }]);
    }

    #[test]
    fn empty_rule_set() {
        let s = select_evidence(&PatientProfile::default(), &[]).unwrap();
        assert_eq!(s, Selection::default());
    }

    #[test]
    fn ties_go_to_lowest_key() {
        let rules = vec![
            rule(5, vec![RulePredicate::Pregnancy(false)]),
            rule(2, vec![RulePredicate::Age(NumRange::at_least(18.0))]),
        ];
        let p = PatientProfile { age: Some(30.0), pregnancy: Some(false), ..Default::default() };
        assert_eq!(select_evidence(&p, &rules).unwrap().selected.unwrap().rule.key, RowKey(2));
    }

    #[test]
    fn mixed_rule_set_is_rejected() {
        let mut other = rule(2, vec![]);
        other.drug = EntityId::new("Warfarin");
        assert!(matches!(
            select_evidence(&PatientProfile::default(), &[rule(1, vec![]), other]),
            Err(PestError::MixedRuleSet(..))
        ));
    }
}
