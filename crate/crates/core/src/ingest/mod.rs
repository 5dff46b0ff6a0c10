//! Markdown monographs to provenance-carrying facts.
//!
//! `section_markdown` splits a document into heading blocks, `Dispatcher`
//! routes each block to one specialist by its header (falling back to the
//! enclosing headers), `extract` runs the deterministic extractor for that
//! specialist, and `persist` validates and writes the records into an
//! unsealed [`HybridStore`](crate::store::HybridStore).

mod corpus;
mod extract;
mod normalize;
mod persist;
mod section;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::Provenance;
use crate::value::Value;

pub use corpus::{load_corpus, write_corpus, CorpusDoc, CorpusManifest, ManifestEntry};
pub use extract::{
    doses_per_day, extract, extract_document, parse_conditions, ConditionSet, DocumentExtraction,
};
pub use normalize::normalize_entity;
pub use persist::{
    canonical_record, persist, store_facts, ContentDigests, Fact, FactMultiset, FactTarget, IngestReport,
    Quarantined,
};
pub use section::{
    section_markdown, statement_lines, Dispatcher, SectionBlock, SectionedDocument, PREAMBLE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("document {0} is empty")]
    EmptyDocument(String),
    #[error("malformed output from {specialist}: {reason}")]
    MalformedOutput { specialist: String, reason: String },
    #[error("corpus i/o: {0}")]
    Io(String),
    #[error("corpus format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Specialist {
    #[serde(rename = "DosageAgent")]
    Dosage,
    #[serde(rename = "ContraindicationAgent")]
    Contraindication,
    #[serde(rename = "InteractionAgent")]
    Interaction,
    #[serde(rename = "SpecialPopulationAgent")]
    SpecialPopulation,
    #[serde(rename = "IndicationAgent")]
    Indication,
}

impl Specialist {
    pub const ALL: [Specialist; 5] = [
        Specialist::Dosage,
        Specialist::Contraindication,
        Specialist::Interaction,
        Specialist::SpecialPopulation,
        Specialist::Indication,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Specialist::Dosage => "DosageAgent",
            Specialist::Contraindication => "ContraindicationAgent",
            Specialist::Interaction => "InteractionAgent",
            Specialist::SpecialPopulation => "SpecialPopulationAgent",
            Specialist::Indication => "IndicationAgent",
        }
    }

    /// Whether this specialist writes to the graph rather than to tables.
    pub fn emits_graph(self) -> bool {
        self == Specialist::Interaction
    }
}

/// A graph endpoint as written by an extractor, before normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub label: String,
    pub name: String,
}

impl NodeSpec {
    pub fn new(label: &str, name: &str) -> Self {
        NodeSpec { label: label.to_string(), name: name.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecordTarget {
    Relational {
        table: String,
        values: std::collections::BTreeMap<String, Value>,
    },
    Graph {
        src: NodeSpec,
        edge_type: String,
        dst: NodeSpec,
        #[serde(default)]
        props: std::collections::BTreeMap<String, Value>,
    },
}

impl RecordTarget {
    pub fn is_graph(&self) -> bool {
        matches!(self, RecordTarget::Graph { .. })
    }
}

/// One extracted fact, ready for persistence. This is also the JSONL
/// interchange format for external extractors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub target: RecordTarget,
    pub prov: Provenance,
    pub specialist: Specialist,
}

/// Result of building a store from a corpus.
#[derive(Debug)]
pub struct BuildOutput {
    pub store: crate::store::HybridStore,
    pub report: IngestReport,
    /// Records produced by the extractors, per document in corpus order.
    pub records: Vec<Vec<ExtractionRecord>>,
}

/// Sections, dispatches and extracts every document (in parallel when
/// `mode` allows), then persists them one by one in corpus order.
/// `tamper` may rewrite a document's records before persistence.
pub fn build_store(
    corpus: &[CorpusDoc],
    schema: crate::schema::HybridSchema,
    mode: crate::par::Execution,
    tamper: Option<&dyn Fn(usize, &mut Vec<ExtractionRecord>)>,
) -> Result<BuildOutput, IngestError> {
    let dispatcher = Dispatcher::default();
    let extracted = crate::par::map(mode, corpus, |d| {
        section_markdown(&d.doc_id, &d.markdown).map(|doc| {
            let ex = extract_document(&doc, &dispatcher);
            (doc, ex)
        })
    });
    let mut store = crate::store::HybridStore::new(schema);
    let mut digests = ContentDigests::default();
    let mut report = IngestReport::default();
    let mut all_records = Vec::with_capacity(corpus.len());
    for (i, (d, item)) in corpus.iter().zip(extracted).enumerate() {
        let (doc, ex) = item?;
        store
            .register_document(&d.doc_id, &d.stratum)
            .expect("a store under construction is unsealed");
        let mut records = ex.records;
        if let Some(t) = tamper {
            t(i, &mut records);
        }
        let mut r = persist(&records, &doc, &mut store, &mut digests);
        r.quarantined.extend(ex.malformed);
        r.null_routes.extend(ex.null_routes.into_iter().map(|h| (d.doc_id.clone(), h)));
        report.merge(r);
        all_records.push(records);
    }
    Ok(BuildOutput { store, report, records: all_records })
}
