//! Shipped gap detectors and expert policies.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::isr::{Classification, DecisionRecord, GapDetector, SchemaChangeProposal};
use super::{
    names, standard_edge_types, standard_tables, ColumnDef, HybridSchema, SchemaChange,
    SchemaError, HEPATIC_LEVELS,
};
use crate::ingest::{statement_lines, SectionedDocument};
use crate::store::Provenance;
use crate::value::ColumnType;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    /// Accept the gap but solidify it as a more general change.
    AcceptWithAbstraction { change: SchemaChange },
    Reject,
}

/// Reviews one proposal and decides its fate.
pub trait ExpertPolicy {
    fn review(
        &mut self,
        doc_id: &str,
        proposal: &SchemaChangeProposal,
        schema: &HybridSchema,
    ) -> Verdict;
}

/// Replays a fixed verdict sequence; falls back to `default` once exhausted.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    queue: VecDeque<Verdict>,
    default: Verdict,
}

impl ScriptedPolicy {
    pub fn new(verdicts: impl IntoIterator<Item = Verdict>, default: Verdict) -> Self {
        ScriptedPolicy { queue: verdicts.into_iter().collect(), default }
    }

    pub fn accept_all() -> Self {
        Self::new([], Verdict::Accept)
    }

    /// Verdicts in the order they were recorded in a proposal log.
    pub fn from_log(log: &[DecisionRecord]) -> Self {
        Self::new(log.iter().flat_map(|r| r.verdicts.iter().cloned()), Verdict::Reject)
    }
}

impl ExpertPolicy for ScriptedPolicy {
    fn review(&mut self, _: &str, _: &SchemaChangeProposal, _: &HybridSchema) -> Verdict {
        self.queue.pop_front().unwrap_or_else(|| self.default.clone())
    }
}

/// Asks a human on a line-oriented terminal.
///
/// Answers: `a` accept, `r` reject, `x <json>` accept with the given
/// abstracted change (a `SchemaChange` JSON object).
pub struct InteractivePolicy<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> InteractivePolicy<R, W> {
    pub fn new(input: R, output: W) -> Self {
        InteractivePolicy { input, output }
    }
}

impl<R: BufRead, W: Write> ExpertPolicy for InteractivePolicy<R, W> {
    fn review(
        &mut self,
        doc_id: &str,
        proposal: &SchemaChangeProposal,
        schema: &HybridSchema,
    ) -> Verdict {
        let _ = writeln!(
            self.output,
            "[{doc_id}] schema v{} gap: {}\n  {:?}: {}\n  source: {:?}\n  accept (a) / reject (r) / abstract (x <json>)?",
            schema.version,
            proposal.gap_description,
            proposal.classification,
            proposal.change.describe(),
            proposal.prov.source_text,
        );
        let _ = self.output.flush();
        loop {
            let mut line = String::new();
            match self.input.read_line(&mut line) {
                Ok(0) | Err(_) => return Verdict::Reject,
                Ok(_) => {}
            }
            let line = line.trim();
            match line.split_once(' ').map_or((line, ""), |(a, b)| (a, b.trim())) {
                ("a", _) => return Verdict::Accept,
                ("r", _) => return Verdict::Reject,
                ("x", json) => match serde_json::from_str::<SchemaChange>(json) {
                    Ok(change) => return Verdict::AcceptWithAbstraction { change },
                    Err(e) => {
                        let _ = writeln!(self.output, "  invalid change: {e}");
                    }
                },
                _ => {
                    let _ = writeln!(self.output, "  answer a, r or x <json>");
                }
            }
        }
    }
}

struct Template {
    trigger: Regex,
    classification: Classification,
    gap: &'static str,
    changes: Vec<SchemaChange>,
}

/// Deterministic keyword/regex detector over section text.
///
/// Each template fires at most once per document, on the first matching
/// line, and only proposes the parts of its change set that the schema
/// (plus changes already proposed for this document) does not yet have.
pub struct RuleTemplateDetector {
    templates: Vec<Template>,
}

fn table_def(name: &str) -> SchemaChange {
    let table = standard_tables().into_iter().find(|t| t.name == name).expect("standard table");
    SchemaChange::AddTable { table }
}

fn edge_def(name: &str) -> SchemaChange {
    let edge_type =
        standard_edge_types().into_iter().find(|e| e.name == name).expect("standard edge type");
    SchemaChange::AddEdgeType { edge_type }
}

fn dosage_column(name: &str, ty: ColumnType) -> SchemaChange {
    SchemaChange::AddColumn { table: names::DOSAGE.into(), column: ColumnDef::new(name, ty) }
}

fn label(name: &str) -> SchemaChange {
    SchemaChange::AddLabel { label: name.into() }
}

impl Default for RuleTemplateDetector {
    fn default() -> Self {
        use names::*;
        use Classification::*;
        let t = |re: &str, classification, gap, changes| Template {
            trigger: Regex::new(re).expect("template regex"),
            classification,
            gap,
            changes,
        };
        let templates = vec![
            t(r"(?i)\bcrcl\b", Constraint, "renal function threshold",
              vec![dosage_column("crcl_range", ColumnType::range(Some("ml/min")))]),
            t(r"(?i)\b(adults|aged)\b", Constraint, "age-dependent dosing",
              vec![dosage_column("age_range", ColumnType::range(Some("years")))]),
            t(r"(?i)\bweight\b.*\bkg\b", Constraint, "weight-dependent dosing",
              vec![dosage_column("weight_range", ColumnType::range(Some("kg")))]),
            t(r"(?i)hepatic impairment", Constraint, "hepatic function condition",
              vec![dosage_column("hepatic_min", ColumnType::enumeration(HEPATIC_LEVELS))]),
            t(r"(?i)\bpregnan", Constraint, "pregnancy condition",
              vec![dosage_column("pregnancy", ColumnType::Boolean)]),
            t(r"(?i)infusion rate", Constraint, "infusion rate limit",
              vec![dosage_column("infusion_rate", ColumnType::number(None))]),
            t(r"(?i)^contraindicated in\b", Constraint, "contraindication rules",
              vec![table_def(CONTRAINDICATIONS)]),
            t(r"(?i)^avoid in\b", Constraint, "special population restrictions",
              vec![table_def(SPECIAL_POPULATIONS)]),
            t(r"(?i)^indicated for\b", Constraint, "approved indications",
              vec![table_def(INDICATIONS)]),
            t(r"(?i)^contains ingredient\b", Topology, "composition lineage",
              vec![label(INGREDIENT), edge_def(HAS_INGREDIENT)]),
            t(r"(?i)^ingredient .+ belongs to class\b", Topology, "ingredient classification",
              vec![label(INGREDIENT), label(CLASS), edge_def(BELONGS_TO)]),
            t(r"(?i)^member of class\b", Topology, "drug classification",
              vec![label(CLASS), edge_def(MEMBER_OF)]),
            t(r"(?i)^class .+ interacts with class\b", Topology, "class-level interaction",
              vec![label(CLASS), edge_def(CLASS_INTERACTS_WITH)]),
            t(r"(?i)physically incompatible with", Topology, "physical incompatibility",
              vec![SchemaChange::AddEdgeType {
                  edge_type: super::EdgeTypeDef::new("has_taboo", DRUG, DRUG),
              }]),
        ];
        RuleTemplateDetector { templates }
    }
}

impl GapDetector for RuleTemplateDetector {
    fn propose(&self, doc: &SectionedDocument, schema: &HybridSchema) -> Vec<SchemaChangeProposal> {
        let mut trial = schema.clone();
        let mut out = Vec::new();
        for template in &self.templates {
            let hit = doc.blocks.iter().find_map(|b| {
                statement_lines(&b.body)
                    .find(|l| template.trigger.is_match(l))
                    .map(|l| Provenance::new(&doc.doc_id, &b.header, l))
            });
            let Some(prov) = hit else { continue };
            for change in &template.changes {
                if trial.validate_change(change).is_ok() {
                    trial.apply_unchecked(change);
                    out.push(SchemaChangeProposal {
                        gap_description: template.gap.to_string(),
                        classification: template.classification,
                        change: change.clone(),
                        prov: prov.clone(),
                    });
                }
            }
        }
        out
    }
}

/// Replays the proposals recorded in a log, keyed by document id.
#[derive(Debug, Clone, Default)]
pub struct ReplayProposer {
    by_doc: BTreeMap<String, Vec<SchemaChangeProposal>>,
}

impl ReplayProposer {
    pub fn from_log(log: &[DecisionRecord]) -> Self {
        ReplayProposer {
            by_doc: log.iter().map(|r| (r.doc_id.clone(), r.proposals.clone())).collect(),
        }
    }

    pub fn with(mut self, doc_id: &str, proposals: Vec<SchemaChangeProposal>) -> Self {
        self.by_doc.insert(doc_id.to_string(), proposals);
        self
    }
}

impl GapDetector for ReplayProposer {
    fn propose(&self, doc: &SectionedDocument, _: &HybridSchema) -> Vec<SchemaChangeProposal> {
        self.by_doc.get(&doc.doc_id).cloned().unwrap_or_default()
    }
}

pub fn write_proposal_log(path: &Path, log: &[DecisionRecord]) -> Result<(), SchemaError> {
    let mut text = String::new();
    for r in log {
        text.push_str(&serde_json::to_string(r).map_err(|e| SchemaError::Json(e.to_string()))?);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| SchemaError::Io(e.to_string()))
}

pub fn read_proposal_log(path: &Path) -> Result<Vec<DecisionRecord>, SchemaError> {
    let text = fs::read_to_string(path).map_err(|e| SchemaError::Io(e.to_string()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| SchemaError::Json(e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{ABEMACICLIB_MD, RIFAMPIN_MD};
    use crate::ingest::section_markdown;
    use crate::schema::{run_isr, seed_schema, StratifiedDoc};

    fn docs() -> Vec<StratifiedDoc> {
        [("abemaciclib", ABEMACICLIB_MD), ("rifampin", RIFAMPIN_MD)]
            .into_iter()
            .map(|(id, md)| StratifiedDoc { stratum: "oncology".into(), doc: section_markdown(id, md).unwrap() })
            .collect()
    }

    #[test]
    fn template_detector_proposes_only_missing_parts() {
        let d = &docs()[0].doc;
        let proposals = RuleTemplateDetector::default().propose(d, &seed_schema());
        let described: Vec<String> = proposals.iter().map(|p| p.change.describe()).collect();
        assert!(described.contains(&format!("add column {}.crcl_range", names::DOSAGE)), "{described:?}");
        assert!(described.contains(&"add label Ingredient".to_string()));
        assert_eq!(described.iter().filter(|d| *d == "add label Class").count(), 1);
        assert!(proposals.iter().all(|p| p.is_consistent(&p.change)));
        let changes: Vec<SchemaChange> = proposals.into_iter().map(|p| p.change).collect();
        let refined = seed_schema().apply(&changes).unwrap();
        assert!(RuleTemplateDetector::default().propose(d, &refined).is_empty());
    }

    #[test]
    fn log_round_trip_replays_to_the_same_schema() {
        let corpus = docs();
        let first = run_isr(&corpus, seed_schema(), &RuleTemplateDetector::default(), &mut ScriptedPolicy::accept_all(), 5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("proposals.jsonl");
        write_proposal_log(&path, &first.state.log).unwrap();
        let log = read_proposal_log(&path).unwrap();
        assert_eq!(log, first.state.log);
        let again = run_isr(&corpus, seed_schema(), &ReplayProposer::from_log(&log), &mut ScriptedPolicy::from_log(&log), 5);
        assert_eq!(again.schema(), first.schema());
        assert_eq!(again.state.log, first.state.log);
    }

    #[test]
    fn interactive_policy_reads_answers() {
        let p = SchemaChangeProposal {
            gap_description: "g".into(),
            classification: Classification::Topology,
            change: label("Organ"),
            prov: Provenance::new("d", "s", "t"),
        };
        let input = b"?\nx {bad\nx {\"op\":\"add_label\",\"label\":\"Tissue\"}\nr\n";
        let mut out = Vec::new();
        let mut policy = InteractivePolicy::new(&input[..], &mut out);
        assert_eq!(
            policy.review("d", &p, &seed_schema()),
            Verdict::AcceptWithAbstraction { change: label("Tissue") }
        );
        assert_eq!(policy.review("d", &p, &seed_schema()), Verdict::Reject);
        assert_eq!(policy.review("d", &p, &seed_schema()), Verdict::Reject);
        let shown = String::from_utf8(out).unwrap();
        assert!(shown.contains("invalid change"));
    }
}
