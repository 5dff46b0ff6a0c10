//! The hybrid knowledge store: a relational constraint store, a labeled
//! property graph, and a bijective vertex/row mapping, all carrying
//! provenance on every fact.
//!
//! A store is built by a single writer and then [`sealed`](HybridStore::seal).
//! Sealing runs the integrity checks and freezes the store; every mutating
//! call on a sealed store returns [`StoreError::SealedStore`]. A sealed store
//! has no interior mutability and can be shared freely across threads.

mod graph;
pub mod instrument;
mod io;
mod mapping;
mod relational;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::schema::HybridSchema;
use crate::value::Value;

pub use graph::{AdjEntry, Direction, Edge, EdgeId, GraphComponent, Vertex};
pub use io::{load_store, save_store};
pub use mapping::MappingTable;
pub use relational::{RelationalComponent, RowKey, StoredRow, Table};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoreError {
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("unknown column {table}.{column}")]
    UnknownColumn { table: String, column: String },
    #[error("type mismatch in {table}.{column}: {reason}")]
    TypeMismatch { table: String, column: String, reason: String },
    #[error("fact has no provenance source text")]
    MissingProvenance,
    #[error("store is sealed")]
    SealedStore,
    #[error("unknown edge type {0}")]
    UnknownEdgeType(String),
    #[error("unknown label {0}")]
    UnknownLabel(String),
    #[error("vertex {id} has label {found}, expected {expected}")]
    LabelMismatch { id: String, expected: String, found: String },
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error("duplicate mapping: {0}")]
    DuplicateMapping(String),
    #[error("integrity violation: {}", .0.join("; "))]
    IntegrityViolation(Vec<String>),
    #[error("store i/o: {0}")]
    Io(String),
    #[error("store format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, StoreError>;

/// Where a fact came from: document, section header and the verbatim text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub doc_id: String,
    pub section: String,
    pub source_text: String,
}

impl Provenance {
    pub fn new(doc_id: &str, section: &str, source_text: &str) -> Self {
        Provenance {
            doc_id: doc_id.to_string(),
            section: section.to_string(),
            source_text: source_text.to_string(),
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.source_text.is_empty() {
            Err(StoreError::MissingProvenance)
        } else {
            Ok(())
        }
    }
}

/// Globally unique entity key shared by rows and vertices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(String);

impl EntityId {
    /// Builds an id from a raw name, applying the identity normalization.
    pub fn new(name: &str) -> Self {
        EntityId(crate::ingest::normalize_entity(name))
    }

    /// Wraps an already-normalized key verbatim.
    pub fn raw(key: impl Into<String>) -> Self {
        EntityId(key.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Corpus document registered with the store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentEntry {
    pub doc_id: String,
    #[serde(default)]
    pub stratum: String,
}

/// Outcome of the integrity checks run at seal/load time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrityReport {
    pub rows: usize,
    pub vertices: usize,
    pub edges: usize,
    pub mapped_pairs: usize,
    pub violations: Vec<String>,
}

impl IntegrityReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct HybridStore {
    schema: HybridSchema,
    relational: RelationalComponent,
    graph: GraphComponent,
    phi: MappingTable,
    documents: BTreeMap<String, DocumentEntry>,
    sealed: bool,
    seal_hash: Option<String>,
}

impl HybridStore {
    pub fn new(schema: HybridSchema) -> Self {
        let graph = GraphComponent::new(&schema);
        HybridStore {
            relational: RelationalComponent::default(),
            graph,
            phi: MappingTable::default(),
            documents: BTreeMap::new(),
            sealed: false,
            seal_hash: None,
            schema,
        }
    }

    pub fn schema(&self) -> &HybridSchema {
        &self.schema
    }

    pub fn relational(&self) -> &RelationalComponent {
        &self.relational
    }

    pub fn graph(&self) -> &GraphComponent {
        &self.graph
    }

    pub fn phi(&self) -> &MappingTable {
        &self.phi
    }

    pub fn documents(&self) -> impl Iterator<Item = &DocumentEntry> {
        self.documents.values()
    }

    pub fn is_sealed(&self) -> bool {
        self.sealed
    }

    /// Content hash computed at seal time; binds reports to a KB snapshot.
    pub fn seal_hash(&self) -> Option<&str> {
        self.seal_hash.as_deref()
    }

    fn writable(&self) -> Result<()> {
        if self.sealed {
            Err(StoreError::SealedStore)
        } else {
            Ok(())
        }
    }

    pub fn register_document(&mut self, doc_id: &str, stratum: &str) -> Result<()> {
        self.writable()?;
        self.documents.insert(
            doc_id.to_string(),
            DocumentEntry { doc_id: doc_id.to_string(), stratum: stratum.to_string() },
        );
        Ok(())
    }

    pub fn insert_relational(
        &mut self,
        table: &str,
        values: BTreeMap<String, Value>,
        prov: Provenance,
    ) -> Result<RowKey> {
        self.writable()?;
        prov.check()?;
        let def = self.schema.table(table).ok_or_else(|| StoreError::UnknownTable(table.into()))?;
        self.relational.insert(def, values, prov)
    }

    pub fn insert_vertex(
        &mut self,
        id: EntityId,
        label: &str,
        props: BTreeMap<String, Value>,
    ) -> Result<()> {
        self.writable()?;
        if !self.schema.node_labels.contains(label) {
            return Err(StoreError::UnknownLabel(label.into()));
        }
        self.graph.ensure_vertex(&id, label, Some(props)).map(|_| ())
    }

    pub fn insert_edge(
        &mut self,
        src: &EntityId,
        edge_type: &str,
        dst: &EntityId,
        props: BTreeMap<String, Value>,
        prov: Provenance,
    ) -> Result<EdgeId> {
        self.writable()?;
        prov.check()?;
        let def = self
            .schema
            .edge_type(edge_type)
            .ok_or_else(|| StoreError::UnknownEdgeType(edge_type.into()))?
            .clone();
        self.graph.insert_edge(src, &def, dst, props, prov)
    }

    pub fn phi_link(&mut self, vertex: &EntityId, table: &str, row: RowKey) -> Result<()> {
        self.writable()?;
        if self.graph.vertex_index(vertex).is_none() {
            return Err(StoreError::DanglingReference(format!("vertex {vertex}")));
        }
        if self.relational.row(table, row).is_none() {
            return Err(StoreError::DanglingReference(format!("row {table}#{row}")));
        }
        self.phi.link(vertex, table, row)
    }

    pub fn phi_forward(&self, vertex: &EntityId) -> Option<(&str, RowKey)> {
        self.phi.forward(vertex)
    }

    pub fn phi_backward(&self, table: &str, row: RowKey) -> Option<&EntityId> {
        self.phi.backward(table, row)
    }

    /// Whether the entity appears anywhere in the store.
    pub fn knows_entity(&self, id: &EntityId) -> bool {
        if self.graph.vertex_index(id).is_some() {
            return true;
        }
        self.schema.mapping_decls.iter().any(|m| {
            self.relational
                .table(&m.table)
                .map(|t| t.has_value(&m.column, &Value::Text(id.as_str().to_string())))
                .unwrap_or(false)
        })
    }

    /// Runs every integrity check without changing the store.
    pub fn integrity_report(&self) -> IntegrityReport {
        let mut violations = Vec::new();
        let check_prov = |what: String, prov: &Provenance, out: &mut Vec<String>| {
            if prov.source_text.is_empty() {
                out.push(format!("{what}: empty source_text"));
            }
            if !self.documents.contains_key(&prov.doc_id) {
                out.push(format!("{what}: unregistered document {}", prov.doc_id));
            }
        };
        let mut rows = 0;
        for table in self.relational.tables() {
            let def = self.schema.table(table.name());
            for row in table.rows() {
                rows += 1;
                check_prov(format!("row {}#{}", table.name(), row.key), &row.prov, &mut violations);
                match def {
                    None => violations.push(format!("table {} not in schema", table.name())),
                    Some(def) => {
                        if let Err(e) = relational::conforms(def, &row.values) {
                            violations.push(format!("row {}#{}: {e}", table.name(), row.key));
                        }
                    }
                }
            }
        }
        for edge in self.graph.edges() {
            let what = format!("edge {}", edge.id);
            check_prov(what.clone(), &edge.prov, &mut violations);
            if self.graph.vertex(edge.src).is_none() || self.graph.vertex(edge.dst).is_none() {
                violations.push(format!("{what}: dangling endpoint"));
            }
        }
        violations.extend(self.phi.violations(|v| self.graph.vertex_index(v).is_some(), |t, r| {
            self.relational.row(t, r).is_some()
        }));
        IntegrityReport {
            rows,
            vertices: self.graph.vertex_count(),
            edges: self.graph.edge_count(),
            mapped_pairs: self.phi.len(),
            violations,
        }
    }

    /// Verifies integrity and freezes the store. Irreversible.
    pub fn seal(&mut self) -> Result<IntegrityReport> {
        if self.sealed {
            return Err(StoreError::SealedStore);
        }
        let report = self.integrity_report();
        if !report.is_clean() {
            return Err(StoreError::IntegrityViolation(report.violations));
        }
        self.seal_hash = Some(self.content_hash());
        self.sealed = true;
        Ok(report)
    }

    /// SHA-256 over the canonical serialization of all facts.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for line in io::canonical_lines(self) {
            h.update(line.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    /// Every provenance source text stored in the KB.
    pub fn source_texts(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        for t in self.relational.tables() {
            for r in t.rows() {
                out.insert(r.prov.source_text.as_str());
            }
        }
        for e in self.graph.edges() {
            out.insert(e.prov.source_text.as_str());
        }
        out
    }
}

#[cfg(test)]
mod tests;
