use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::normalize::normalize_entity;
use super::section::SectionedDocument;
use super::{ExtractionRecord, RecordTarget};
use crate::schema::HybridSchema;
use crate::store::{EntityId, HybridStore, Provenance};
use crate::value::Value;

/// Text columns holding entity names; normalized like drug identifiers.
const ENTITY_TEXT_COLUMNS: &[&str] = &["condition", "indication"];

/// A record that failed validation, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Quarantined {
    pub doc_id: String,
    pub section: String,
    pub source_text: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FactTarget {
    Row {
        table: String,
        values: BTreeMap<String, Value>,
    },
    Edge {
        src_label: String,
        src: EntityId,
        edge_type: String,
        dst_label: String,
        dst: EntityId,
        props: BTreeMap<String, Value>,
    },
}

/// Normalized, schema-coerced form of a stored fact. Two facts are the same
/// fact exactly when their canonical keys are equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fact {
    pub prov: Provenance,
    pub target: FactTarget,
}

impl Fact {
    pub fn key(&self) -> String {
        serde_json::to_string(self).expect("fact serializes")
    }

    fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.key().as_bytes()))
    }
}

fn is_entity_column(schema: &HybridSchema, table: &str, column: &str) -> bool {
    ENTITY_TEXT_COLUMNS.contains(&column)
        || schema.mapping_decls.iter().any(|m| m.table == table && m.column == column)
}

/// Validates a record against the schema and returns its canonical fact:
/// values coerced to column types, nulls dropped, entity names normalized.
pub fn canonical_record(record: &ExtractionRecord, schema: &HybridSchema) -> Result<Fact, String> {
    let target = match &record.target {
        RecordTarget::Relational { table, values } => {
            let def = schema.table(table).ok_or_else(|| format!("unknown table {table}"))?;
            let mut out = BTreeMap::new();
            for (name, v) in values {
                let col = def
                    .column(name)
                    .ok_or_else(|| format!("unknown column {table}.{name}"))?;
                let v = v.clone().coerce(&col.ty).map_err(|e| format!("{table}.{name}: {e}"))?;
                let v = match v {
                    Value::Text(s) if is_entity_column(schema, table, name) => {
                        Value::Text(normalize_entity(&s))
                    }
                    v => v,
                };
                if !v.is_null() {
                    out.insert(name.clone(), v);
                }
            }
            for col in &def.columns {
                if !col.nullable && !out.contains_key(&col.name) {
                    return Err(format!("missing required column {table}.{}", col.name));
                }
            }
            FactTarget::Row { table: table.clone(), values: out }
        }
        RecordTarget::Graph { src, edge_type, dst, props } => {
            let def = schema
                .edge_type(edge_type)
                .ok_or_else(|| format!("unknown edge type {edge_type}"))?;
            if src.label != def.src_label || dst.label != def.dst_label {
                return Err(format!(
                    "{edge_type} connects {} -> {}, got {} -> {}",
                    def.src_label, def.dst_label, src.label, dst.label
                ));
            }
            let (s, d) = (EntityId::new(&src.name), EntityId::new(&dst.name));
            if s.as_str().is_empty() || d.as_str().is_empty() {
                return Err("empty entity name".into());
            }
            FactTarget::Edge {
                src_label: src.label.clone(),
                src: s,
                edge_type: edge_type.clone(),
                dst_label: dst.label.clone(),
                dst: d,
                props: props.iter().filter(|(_, v)| !v.is_null()).map(|(k, v)| (k.clone(), v.clone())).collect(),
            }
        }
    };
    Ok(Fact { prov: record.prov.clone(), target })
}

/// Dumps every fact in the store in canonical form.
pub fn store_facts(store: &HybridStore) -> Vec<Fact> {
    let mut out = Vec::new();
    for t in store.relational().tables() {
        for r in t.rows() {
            let values = t.row_map(r).into_iter().filter(|(_, v)| !v.is_null()).collect();
            out.push(Fact {
                prov: r.prov.clone(),
                target: FactTarget::Row { table: t.name().to_string(), values },
            });
        }
    }
    let g = store.graph();
    for e in g.edges() {
        let (s, d) = (&g.vertices()[e.src as usize], &g.vertices()[e.dst as usize]);
        out.push(Fact {
            prov: e.prov.clone(),
            target: FactTarget::Edge {
                src_label: s.label.clone(),
                src: s.id.clone(),
                edge_type: e.edge_type.clone(),
                dst_label: d.label.clone(),
                dst: d.id.clone(),
                props: e.props.clone(),
            },
        });
    }
    out
}

/// Multiset of canonical fact keys, for exact-match scoring.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FactMultiset(pub BTreeMap<String, usize>);

impl FactMultiset {
    pub fn from_facts<'a>(facts: impl IntoIterator<Item = &'a Fact>) -> Self {
        let mut m = BTreeMap::new();
        for f in facts {
            *m.entry(f.key()).or_insert(0) += 1;
        }
        FactMultiset(m)
    }

    pub fn len(&self) -> usize {
        self.0.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Size of the multiset intersection.
    pub fn overlap(&self, other: &FactMultiset) -> usize {
        self.0.iter().map(|(k, n)| (*n).min(other.0.get(k).copied().unwrap_or(0))).sum()
    }
}

/// Digests of facts already persisted; makes re-ingestion a no-op.
#[derive(Debug, Clone, Default)]
pub struct ContentDigests(BTreeSet<String>);

impl ContentDigests {
    pub fn from_store(store: &HybridStore) -> Self {
        ContentDigests(store_facts(store).iter().map(Fact::digest).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub documents: usize,
    pub rows_inserted: BTreeMap<String, usize>,
    pub edges_inserted: BTreeMap<String, usize>,
    pub duplicates_skipped: usize,
    pub phi_links: usize,
    pub quarantined: Vec<Quarantined>,
    /// (doc_id, header) of blocks no specialist claimed.
    pub null_routes: Vec<(String, String)>,
}

impl IngestReport {
    pub fn merge(&mut self, other: IngestReport) {
        self.documents += other.documents;
        for (k, v) in other.rows_inserted {
            *self.rows_inserted.entry(k).or_default() += v;
        }
        for (k, v) in other.edges_inserted {
            *self.edges_inserted.entry(k).or_default() += v;
        }
        self.duplicates_skipped += other.duplicates_skipped;
        self.phi_links += other.phi_links;
        self.quarantined.extend(other.quarantined);
        self.null_routes.extend(other.null_routes);
    }

    pub fn facts_inserted(&self) -> usize {
        self.rows_inserted.values().sum::<usize>() + self.edges_inserted.values().sum::<usize>()
    }
}

fn provenance_problem(record: &ExtractionRecord, doc: &SectionedDocument) -> Option<String> {
    let p = &record.prov;
    if p.source_text.is_empty() {
        return Some("empty source_text".into());
    }
    if p.doc_id != doc.doc_id {
        return Some(format!("provenance names document {} while ingesting {}", p.doc_id, doc.doc_id));
    }
    let found = doc.blocks.iter().any(|b| b.header == p.section && b.body.contains(&p.source_text));
    (!found).then(|| format!("source_text is not part of section {:?}", p.section))
}

/// Validates and writes one document's records. Failures are quarantined,
/// never fatal. Finishes by linking any newly co-located entities in phi.
pub fn persist(
    records: &[ExtractionRecord],
    doc: &SectionedDocument,
    store: &mut HybridStore,
    digests: &mut ContentDigests,
) -> IngestReport {
    let mut report = IngestReport { documents: 1, ..IngestReport::default() };
    let quarantine = |r: &ExtractionRecord, reason: String| Quarantined {
        doc_id: r.prov.doc_id.clone(),
        section: r.prov.section.clone(),
        source_text: r.prov.source_text.clone(),
        reason,
    };
    for record in records {
        if let Some(reason) = provenance_problem(record, doc) {
            report.quarantined.push(quarantine(record, reason));
            continue;
        }
        if record.specialist.emits_graph() != record.target.is_graph() {
            let reason = format!("specialist isolation: {} emitted a foreign target", record.specialist.name());
            report.quarantined.push(quarantine(record, reason));
            continue;
        }
        let fact = match canonical_record(record, store.schema()) {
            Ok(f) => f,
            Err(reason) => {
                report.quarantined.push(quarantine(record, reason));
                continue;
            }
        };
        let digest = fact.digest();
        if digests.0.contains(&digest) {
            report.duplicates_skipped += 1;
            continue;
        }
        let result = match &fact.target {
            FactTarget::Row { table, values } => store
                .insert_relational(table, values.clone(), fact.prov.clone())
                .map(|_| (true, table.clone())),
            FactTarget::Edge { src, edge_type, dst, props, .. } => store
                .insert_edge(src, edge_type, dst, props.clone(), fact.prov.clone())
                .map(|_| (false, edge_type.clone())),
        };
        match result {
            Ok((true, table)) => *report.rows_inserted.entry(table).or_default() += 1,
            Ok((false, edge_type)) => *report.edges_inserted.entry(edge_type).or_default() += 1,
            Err(e) => {
                report.quarantined.push(quarantine(record, e.to_string()));
                continue;
            }
        }
        digests.0.insert(digest);
    }
    report.phi_links = link_entities(store);
    report
}

/// Anchors each unmapped vertex to the lowest-key row of the first mapping
/// declaration whose entity column names it. Returns the number of new links.
pub(crate) fn link_entities(store: &mut HybridStore) -> usize {
    let mut pending = Vec::new();
    let mut claimed: BTreeSet<EntityId> = BTreeSet::new();
    for decl in &store.schema().mapping_decls {
        let Some(table) = store.relational().table(&decl.table) else { continue };
        for row in table.rows() {
            let Some(Value::Text(name)) = table.value(row, &decl.column) else { continue };
            let id = EntityId::raw(name.clone());
            let label_ok = store.graph().vertex_by_id(&id).is_some_and(|v| v.label == decl.label);
            if label_ok
                && store.phi_forward(&id).is_none()
                && store.phi_backward(&decl.table, row.key).is_none()
                && claimed.insert(id.clone())
            {
                pending.push((id, decl.table.clone(), row.key));
            }
        }
    }
    let n = pending.len();
    for (id, table, key) in pending {
        store.phi_link(&id, &table, key).expect("link candidates were checked");
    }
    n
}
