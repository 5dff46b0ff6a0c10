//! Deterministic extractors for the monograph template language.
//!
//! Statement lines (bullets or plain lines, tables excluded):
//!
//! ```text
//! Dosage            <conditions>: <amount> <mcg|mg|g> <frequency>[; reduce <p>% if <conditions>].
//! Contraindication  Contraindicated in <conditions>.
//! SpecialPopulation Avoid in <conditions>.
//! Indication        Indicated for <condition name>.
//! Interaction       Interacts with <drug>: <mechanism>.
//!                   Contains ingredient <ingredient>.
//!                   Ingredient <ingredient> belongs to class <class>.
//!                   Member of class <class>.
//!                   Class <class> interacts with class <class>: <mechanism>.
//! ```
//!
//! `<conditions>` is `Standard dose` or phrases joined by ` and `: `adults`,
//! `aged N years or older`, `aged under N years`, `CrCl < N mL/min`,
//! `CrCl A to B mL/min`, `weight < N kg`, `weight at least N kg`,
//! `mild|moderate|severe hepatic impairment`, `pregnancy`,
//! `patients with <condition>`.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;

use super::section::{statement_lines, Dispatcher, SectionBlock, SectionedDocument};
use super::{ExtractionRecord, IngestError, NodeSpec, RecordTarget, Specialist};
use crate::schema::names;
use crate::store::Provenance;
use crate::value::{convert, fmt_num, NumRange, Value};
use super::Quarantined;

/// Patient-condition bindings parsed from a condition phrase list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConditionSet {
    pub age: Option<NumRange>,
    pub weight: Option<NumRange>,
    pub crcl: Option<NumRange>,
    pub hepatic_min: Option<String>,
    pub pregnancy: Option<bool>,
    pub condition: Option<String>,
}

fn set<T>(slot: &mut Option<T>, v: T, what: &str) -> Result<(), String> {
    if slot.is_some() {
        return Err(format!("{what} bound twice"));
    }
    *slot = Some(v);
    Ok(())
}

impl ConditionSet {
    pub fn is_empty(&self) -> bool {
        *self == ConditionSet::default()
    }

    /// Union of two sets; an attribute bound in both is an error.
    pub fn merge(&self, other: &ConditionSet) -> Result<ConditionSet, String> {
        let mut out = self.clone();
        if let Some(v) = other.age {
            set(&mut out.age, v, "age")?;
        }
        if let Some(v) = other.weight {
            set(&mut out.weight, v, "weight")?;
        }
        if let Some(v) = other.crcl {
            set(&mut out.crcl, v, "crcl")?;
        }
        if let Some(v) = &other.hepatic_min {
            set(&mut out.hepatic_min, v.clone(), "hepatic status")?;
        }
        if let Some(v) = other.pregnancy {
            set(&mut out.pregnancy, v, "pregnancy")?;
        }
        if let Some(v) = &other.condition {
            set(&mut out.condition, v.clone(), "condition")?;
        }
        Ok(out)
    }

    /// Column values for the shared condition columns (and `condition`
    /// when `with_condition`).
    pub fn to_values(&self, with_condition: bool) -> BTreeMap<String, Value> {
        let mut m = BTreeMap::new();
        if let Some(r) = self.age {
            m.insert("age_range".into(), Value::Range(r));
        }
        if let Some(r) = self.weight {
            m.insert("weight_range".into(), Value::Range(r));
        }
        if let Some(r) = self.crcl {
            m.insert("crcl_range".into(), Value::Range(r));
        }
        if let Some(h) = &self.hepatic_min {
            m.insert("hepatic_min".into(), Value::Enum(h.clone()));
        }
        if let Some(p) = self.pregnancy {
            m.insert("pregnancy".into(), Value::Bool(p));
        }
        if let (true, Some(c)) = (with_condition, &self.condition) {
            m.insert("condition".into(), Value::text(c.clone()));
        }
        m
    }

    /// Renders the set back into the template language. Only ranges the
    /// grammar can express are accepted.
    pub fn render(&self) -> Result<String, String> {
        let mut parts = Vec::new();
        let range = |r: &NumRange, what: &str| -> Result<(Option<f64>, Option<f64>), String> {
            match (r.min, r.max, r.min_inclusive, r.max_inclusive) {
                (Some(a), None, true, _) => Ok((Some(a), None)),
                (None, Some(b), _, false) => Ok((None, Some(b))),
                (Some(a), Some(b), true, true) => Ok((Some(a), Some(b))),
                _ => Err(format!("{what} range {r} has no template form")),
            }
        };
        if let Some(r) = &self.age {
            parts.push(match range(r, "age")? {
                (Some(a), None) => format!("aged {} years or older", fmt_num(a)),
                (None, Some(b)) => format!("aged under {} years", fmt_num(b)),
                _ => return Err("bounded age ranges have no template form".into()),
            });
        }
        if let Some(r) = &self.weight {
            parts.push(match range(r, "weight")? {
                (Some(a), None) => format!("weight at least {} kg", fmt_num(a)),
                (None, Some(b)) => format!("weight < {} kg", fmt_num(b)),
                _ => return Err("bounded weight ranges have no template form".into()),
            });
        }
        if let Some(r) = &self.crcl {
            parts.push(match range(r, "crcl")? {
                (None, Some(b)) => format!("CrCl < {} mL/min", fmt_num(b)),
                (Some(a), Some(b)) => format!("CrCl {} to {} mL/min", fmt_num(a), fmt_num(b)),
                _ => return Err("open-ended crcl lower bounds have no template form".into()),
            });
        }
        if let Some(h) = &self.hepatic_min {
            parts.push(format!("{} hepatic impairment", h.to_lowercase()));
        }
        match self.pregnancy {
            Some(true) => parts.push("pregnancy".into()),
            Some(false) => return Err("pregnancy = false has no template form".into()),
            None => {}
        }
        if let Some(c) = &self.condition {
            parts.push(format!("patients with {c}"));
        }
        if parts.is_empty() {
            return Ok("Standard dose".into());
        }
        Ok(parts.join(" and "))
    }
}

struct Grammar {
    age_min: Regex,
    age_max: Regex,
    crcl_max: Regex,
    crcl_between: Regex,
    weight_max: Regex,
    weight_min: Regex,
    hepatic: Regex,
    patients_with: Regex,
    dosage: Regex,
    contraindicated: Regex,
    avoid: Regex,
    indicated: Regex,
    interacts: Regex,
    contains: Regex,
    belongs: Regex,
    member: Regex,
    class_interacts: Regex,
}

const NUM: &str = r"(\d+(?:\.\d+)?)";

fn grammar() -> &'static Grammar {
    static G: OnceLock<Grammar> = OnceLock::new();
    G.get_or_init(|| {
        let r = |p: String| Regex::new(&format!("(?i)^{p}$")).expect("grammar regex");
        Grammar {
            age_min: r(format!(r"aged {NUM} years or older")),
            age_max: r(format!(r"aged under {NUM} years")),
            crcl_max: r(format!(r"crcl < {NUM} ml/min")),
            crcl_between: r(format!(r"crcl {NUM} to {NUM} ml/min")),
            weight_max: r(format!(r"weight < {NUM} kg")),
            weight_min: r(format!(r"weight at least {NUM} kg")),
            hepatic: r(r"(mild|moderate|severe) hepatic impairment".into()),
            patients_with: r(r"patients with (.+)".into()),
            dosage: r(format!(
                r"(?P<conds>[^:;]+):\s*(?P<dose>{NUM}\s*(?P<unit>mcg|mg|g)\s+(?P<freq>once daily|twice daily|three times daily|four times daily|per day))(?:;\s*reduce (?P<pct>\d+(?:\.\d+)?)% if (?P<conds2>.+?))?\.?"
            )),
            contraindicated: r(r"contraindicated in (?P<conds>.+?)\.?".into()),
            avoid: r(r"avoid in (?P<conds>.+?)\.?".into()),
            indicated: r(r"indicated for (?P<c>.+?)\.?".into()),
            interacts: r(r"interacts with (?P<d>[^:]+?):\s*(?P<m>.+?)\.?".into()),
            contains: r(r"contains ingredient (?P<i>.+?)\.?".into()),
            belongs: r(r"ingredient (?P<i>.+?) belongs to class (?P<c>.+?)\.?".into()),
            member: r(r"member of class (?P<c>.+?)\.?".into()),
            class_interacts: r(
                r"class (?P<a>.+?) interacts with class (?P<b>[^:]+?):\s*(?P<m>.+?)\.?".into(),
            ),
        }
    })
}

fn num(s: &str) -> f64 {
    s.parse().expect("regex admits only decimal numbers")
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c.flat_map(char::to_lowercase)).collect(),
        None => String::new(),
    }
}

/// Parses a condition phrase list (see module docs).
pub fn parse_conditions(text: &str) -> Result<ConditionSet, String> {
    let g = grammar();
    let text = text.trim();
    let mut out = ConditionSet::default();
    if text.eq_ignore_ascii_case("standard dose") {
        return Ok(out);
    }
    for phrase in text.split(" and ") {
        let p = phrase.trim();
        if p.eq_ignore_ascii_case("adults") {
            set(&mut out.age, NumRange::at_least(18.0), "age")?;
        } else if let Some(c) = g.age_min.captures(p) {
            set(&mut out.age, NumRange::at_least(num(&c[1])), "age")?;
        } else if let Some(c) = g.age_max.captures(p) {
            set(&mut out.age, NumRange::below(num(&c[1])), "age")?;
        } else if let Some(c) = g.crcl_max.captures(p) {
            set(&mut out.crcl, NumRange::below(num(&c[1])), "crcl")?;
        } else if let Some(c) = g.crcl_between.captures(p) {
            let (a, b) = (num(&c[1]), num(&c[2]));
            if a > b {
                return Err(format!("empty CrCl interval in {p:?}"));
            }
            set(&mut out.crcl, NumRange::between(a, b), "crcl")?;
        } else if let Some(c) = g.weight_max.captures(p) {
            set(&mut out.weight, NumRange::below(num(&c[1])), "weight")?;
        } else if let Some(c) = g.weight_min.captures(p) {
            set(&mut out.weight, NumRange::at_least(num(&c[1])), "weight")?;
        } else if let Some(c) = g.hepatic.captures(p) {
            set(&mut out.hepatic_min, capitalize(&c[1]), "hepatic status")?;
        } else if p.eq_ignore_ascii_case("pregnancy") {
            set(&mut out.pregnancy, true, "pregnancy")?;
        } else if let Some(c) = g.patients_with.captures(p) {
            set(&mut out.condition, c[1].trim().to_string(), "condition")?;
        } else {
            return Err(format!("unrecognized condition {p:?}"));
        }
    }
    Ok(out)
}

/// Administrations per day for a frequency phrase.
pub fn doses_per_day(freq: &str) -> Option<f64> {
    match freq.trim().to_lowercase().as_str() {
        "once daily" | "per day" | "daily" => Some(1.0),
        "twice daily" => Some(2.0),
        "three times daily" => Some(3.0),
        "four times daily" => Some(4.0),
        _ => None,
    }
}

fn malformed(s: Specialist, reason: impl Into<String>) -> IngestError {
    IngestError::MalformedOutput { specialist: s.name().to_string(), reason: reason.into() }
}

fn row(table: &str, drug: &str, extra: BTreeMap<String, Value>) -> RecordTarget {
    let mut values = extra;
    values.insert("drug".into(), Value::text(drug));
    RecordTarget::Relational { table: table.to_string(), values }
}

fn edge(src: NodeSpec, edge_type: &str, dst: NodeSpec, mechanism: Option<&str>) -> RecordTarget {
    let mut props = BTreeMap::new();
    if let Some(m) = mechanism {
        props.insert("mechanism".to_string(), Value::text(m.trim()));
    }
    RecordTarget::Graph { src, edge_type: edge_type.to_string(), dst, props }
}

fn extract_line(
    line: &str,
    specialist: Specialist,
    subject: &str,
) -> Result<Vec<RecordTarget>, IngestError> {
    let g = grammar();
    let bad = |r: String| malformed(specialist, format!("{r} in {line:?}"));
    let no_match = || malformed(specialist, format!("statement not in template language: {line:?}"));
    match specialist {
        Specialist::Dosage => {
            let c = g.dosage.captures(line).ok_or_else(no_match)?;
            let conds = parse_conditions(&c["conds"]).map_err(bad)?;
            if conds.condition.is_some() {
                return Err(bad("dosage rules cannot bind a named condition".into()));
            }
            let per_day = doses_per_day(&c["freq"]).expect("regex admits known frequencies");
            let daily = convert(num(&c[3]) * per_day, &c["unit"].to_lowercase(), "mg").map_err(bad)?;
            let dose = c["dose"].to_string();
            let mut first = conds.to_values(false);
            first.insert("max_daily_dose".into(), Value::Number(daily));
            first.insert("dose_text".into(), Value::text(dose.clone()));
            let mut out = vec![row(names::DOSAGE, subject, first)];
            if let (Some(pct), Some(conds2)) = (c.name("pct"), c.name("conds2")) {
                let pct = num(pct.as_str());
                if pct <= 0.0 || pct >= 100.0 {
                    return Err(bad(format!("reduction {pct}% out of range")));
                }
                let extra = parse_conditions(conds2.as_str()).map_err(bad)?;
                if extra.is_empty() {
                    return Err(bad("reduction without a condition".into()));
                }
                let merged = conds.merge(&extra).map_err(bad)?;
                if merged.condition.is_some() {
                    return Err(bad("dosage rules cannot bind a named condition".into()));
                }
                let mut second = merged.to_values(false);
                second.insert("max_daily_dose".into(), Value::Number(reduced_dose(daily, pct)));
                second.insert(
                    "dose_text".into(),
                    Value::text(format!("{dose} reduced by {}%", fmt_num(pct))),
                );
                out.push(row(names::DOSAGE, subject, second));
            }
            Ok(out)
        }
        Specialist::Contraindication => {
            let c = g.contraindicated.captures(line).ok_or_else(no_match)?;
            let conds = parse_conditions(&c["conds"]).map_err(bad)?;
            if conds.is_empty() {
                return Err(bad("contraindication without a condition".into()));
            }
            Ok(vec![row(names::CONTRAINDICATIONS, subject, conds.to_values(true))])
        }
        Specialist::SpecialPopulation => {
            let c = g.avoid.captures(line).ok_or_else(no_match)?;
            let conds = parse_conditions(&c["conds"]).map_err(bad)?;
            if conds.is_empty() || conds.condition.is_some() {
                return Err(bad("population must be described by patient attributes".into()));
            }
            let mut values = conds.to_values(false);
            values.insert("population".into(), Value::text(c["conds"].trim()));
            values.insert("recommendation".into(), Value::text("avoid"));
            Ok(vec![row(names::SPECIAL_POPULATIONS, subject, values)])
        }
        Specialist::Indication => {
            let c = g.indicated.captures(line).ok_or_else(no_match)?;
            let mut values = BTreeMap::new();
            values.insert("indication".into(), Value::text(c["c"].trim()));
            Ok(vec![row(names::INDICATIONS, subject, values)])
        }
        Specialist::Interaction => {
            use names::*;
            let drug = || NodeSpec::new(DRUG, subject);
            if let Some(c) = g.class_interacts.captures(line) {
                return Ok(vec![edge(
                    NodeSpec::new(CLASS, c["a"].trim()),
                    CLASS_INTERACTS_WITH,
                    NodeSpec::new(CLASS, c["b"].trim()),
                    Some(&c["m"]),
                )]);
            }
            if let Some(c) = g.interacts.captures(line) {
                let other = NodeSpec::new(DRUG, c["d"].trim());
                return Ok(vec![edge(drug(), INTERACTS_WITH, other, Some(&c["m"]))]);
            }
            if let Some(c) = g.belongs.captures(line) {
                return Ok(vec![edge(
                    NodeSpec::new(INGREDIENT, c["i"].trim()),
                    BELONGS_TO,
                    NodeSpec::new(CLASS, c["c"].trim()),
                    None,
                )]);
            }
            if let Some(c) = g.contains.captures(line) {
                return Ok(vec![edge(drug(), HAS_INGREDIENT, NodeSpec::new(INGREDIENT, c["i"].trim()), None)]);
            }
            if let Some(c) = g.member.captures(line) {
                return Ok(vec![edge(drug(), MEMBER_OF, NodeSpec::new(CLASS, c["c"].trim()), None)]);
            }
            Err(no_match())
        }
    }
}

/// Dose limit after a percentage reduction.
pub(crate) fn reduced_dose(daily: f64, pct: f64) -> f64 {
    daily * (100.0 - pct) / 100.0
}

fn extract_statements<'a>(
    doc_id: &str,
    subject: Option<&str>,
    block: &'a SectionBlock,
    specialist: Specialist,
) -> Vec<(&'a str, Result<Vec<ExtractionRecord>, IngestError>)> {
    statement_lines(&block.body)
        .map(|line| {
            let result = match subject {
                None => Err(malformed(specialist, format!("no product title for {line:?}"))),
                Some(subject) => extract_line(line, specialist, subject).map(|targets| {
                    targets
                        .into_iter()
                        .map(|target| ExtractionRecord {
                            target,
                            prov: Provenance::new(doc_id, &block.header, line),
                            specialist,
                        })
                        .collect()
                }),
            };
            (line, result)
        })
        .collect()
}

/// Runs one specialist over one block. Each statement yields records or a
/// per-statement error; errors never abort the block.
pub fn extract(
    doc_id: &str,
    subject: Option<&str>,
    block: &SectionBlock,
    specialist: Specialist,
) -> Vec<Result<ExtractionRecord, IngestError>> {
    let mut out = Vec::new();
    for (_, r) in extract_statements(doc_id, subject, block, specialist) {
        match r {
            Ok(records) => out.extend(records.into_iter().map(Ok)),
            Err(e) => out.push(Err(e)),
        }
    }
    out
}

/// Per-document extraction result.
#[derive(Debug, Clone, Default)]
pub struct DocumentExtraction {
    pub records: Vec<ExtractionRecord>,
    pub malformed: Vec<Quarantined>,
    /// Headers of blocks that took the null route.
    pub null_routes: Vec<String>,
}

/// Dispatches and extracts every block of a document.
pub fn extract_document(doc: &SectionedDocument, dispatcher: &Dispatcher) -> DocumentExtraction {
    let subject = doc.title();
    let mut out = DocumentExtraction::default();
    for block in &doc.blocks {
        let Some(specialist) = dispatcher.dispatch(block) else {
            out.null_routes.push(block.header.clone());
            continue;
        };
        for (line, r) in extract_statements(&doc.doc_id, subject, block, specialist) {
            match r {
                Ok(records) => out.records.extend(records),
                Err(e) => out.malformed.push(Quarantined {
                    doc_id: doc.doc_id.clone(),
                    section: block.header.clone(),
                    source_text: line.to_string(),
                    reason: e.to_string(),
                }),
            }
        }
    }
    out
}
