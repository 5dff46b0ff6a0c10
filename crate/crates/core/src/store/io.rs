//! On-disk layout of a store directory:
//!
//! ```text
//! schema.json        versioned schema with diff history
//! relational.jsonl   one {"table", "key", "values", "prov"} per line
//! graph.jsonl        vertices first, then edges
//! phi.jsonl          one {"vertex", "table", "row"} per line
//! manifest.json      document registry and seal hash
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mapping::MappedPair;
use super::{
    DocumentEntry, EntityId, HybridStore, Provenance, Result, RowKey, StoreError, StoredRow,
};
use crate::schema::HybridSchema;
use crate::value::Value;

#[derive(Debug, Serialize, Deserialize)]
struct RowLine {
    table: String,
    key: RowKey,
    values: BTreeMap<String, Value>,
    prov: Provenance,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum GraphLine {
    Vertex { id: EntityId, label: String, props: BTreeMap<String, Value> },
    Edge {
        id: u64,
        src: EntityId,
        edge_type: String,
        dst: EntityId,
        props: BTreeMap<String, Value>,
        prov: Provenance,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    documents: Vec<DocumentEntry>,
    sealed: bool,
    seal_hash: Option<String>,
}

fn io_err(e: impl std::fmt::Display) -> StoreError {
    StoreError::Io(e.to_string())
}

fn row_lines(store: &HybridStore) -> impl Iterator<Item = RowLine> + '_ {
    store.relational.tables().flat_map(|t| {
        t.rows().iter().map(move |r| RowLine {
            table: t.name().to_string(),
            key: r.key,
            values: t.row_map(r),
            prov: r.prov.clone(),
        })
    })
}

fn graph_lines(store: &HybridStore) -> impl Iterator<Item = GraphLine> + '_ {
    let g = &store.graph;
    let vertices = g.vertices().iter().map(|v| GraphLine::Vertex {
        id: v.id.clone(),
        label: v.label.clone(),
        props: v.props.clone(),
    });
    let edges = g.edges().iter().map(move |e| GraphLine::Edge {
        id: e.id.0,
        src: g.vertices()[e.src as usize].id.clone(),
        edge_type: e.edge_type.clone(),
        dst: g.vertices()[e.dst as usize].id.clone(),
        props: e.props.clone(),
        prov: e.prov.clone(),
    });
    vertices.chain(edges)
}

/// Canonical serialization used for the seal hash.
pub(super) fn canonical_lines(store: &HybridStore) -> Vec<String> {
    let mut out = vec![serde_json::to_string(&store.schema).expect("schema serializes")];
    out.extend(row_lines(store).map(|l| serde_json::to_string(&l).expect("row serializes")));
    out.extend(graph_lines(store).map(|l| serde_json::to_string(&l).expect("graph serializes")));
    out.extend(store.phi.pairs().map(|p| serde_json::to_string(&p).expect("pair serializes")));
    out
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl Iterator<Item = T>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(io_err)?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let r = BufReader::new(fs::File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| {
            StoreError::Format(format!("{}:{}: {e}", path.display(), n + 1))
        })?);
    }
    Ok(out)
}

pub fn save_store(store: &HybridStore, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err)?;
    fs::write(dir.join("schema.json"), store.schema.to_json()).map_err(io_err)?;
    write_jsonl(&dir.join("relational.jsonl"), row_lines(store))?;
    write_jsonl(&dir.join("graph.jsonl"), graph_lines(store))?;
    write_jsonl(&dir.join("phi.jsonl"), store.phi.pairs())?;
    let manifest = Manifest {
        schema_version: store.schema.version,
        documents: store.documents.values().cloned().collect(),
        sealed: store.sealed,
        seal_hash: store.seal_hash.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(io_err)?;
    fs::write(dir.join("manifest.json"), json).map_err(io_err)
}

/// Loads a store directory and re-verifies every integrity invariant.
/// A store saved sealed is re-sealed and its content hash must match.
pub fn load_store(dir: &Path) -> Result<HybridStore> {
    let schema_text = fs::read_to_string(dir.join("schema.json")).map_err(io_err)?;
    let schema =
        HybridSchema::from_json(&schema_text).map_err(|e| StoreError::Format(e.to_string()))?;
    let manifest: Manifest = serde_json::from_str(
        &fs::read_to_string(dir.join("manifest.json")).map_err(io_err)?,
    )
    .map_err(|e| StoreError::Format(format!("manifest.json: {e}")))?;
    let mut store = HybridStore::new(schema);
    for d in manifest.documents {
        store.documents.insert(d.doc_id.clone(), d);
    }

    for line in read_jsonl::<RowLine>(&dir.join("relational.jsonl"))? {
        let def = store
            .schema
            .table(&line.table)
            .ok_or_else(|| StoreError::UnknownTable(line.table.clone()))?
            .clone();
        let mut values = line.values;
        let row: Vec<Value> =
            def.columns.iter().map(|c| values.remove(&c.name).unwrap_or(Value::Null)).collect();
        if let Some(extra) = values.into_keys().next() {
            return Err(StoreError::UnknownColumn { table: line.table, column: extra });
        }
        store.relational.restore(&def, StoredRow { key: line.key, values: row, prov: line.prov })?;
    }

    for line in read_jsonl::<GraphLine>(&dir.join("graph.jsonl"))? {
        match line {
            GraphLine::Vertex { id, label, props } => {
                if !store.schema.node_labels.contains(&label) {
                    return Err(StoreError::UnknownLabel(label));
                }
                store.graph.ensure_vertex(&id, &label, Some(props))?;
            }
            GraphLine::Edge { id, src, edge_type, dst, props, prov } => {
                let def = store
                    .schema
                    .edge_type(&edge_type)
                    .ok_or_else(|| StoreError::UnknownEdgeType(edge_type.clone()))?
                    .clone();
                for end in [&src, &dst] {
                    if store.graph.vertex_index(end).is_none() {
                        return Err(StoreError::DanglingReference(format!(
                            "edge e{id} endpoint {end}"
                        )));
                    }
                }
                let got = store.graph.insert_edge(&src, &def, &dst, props, prov)?;
                if got.0 != id {
                    return Err(StoreError::Format(format!("edge id e{id} out of sequence")));
                }
            }
        }
    }

    for pair in read_jsonl::<MappedPair>(&dir.join("phi.jsonl"))? {
        store.phi_link(&pair.vertex, &pair.table, pair.row)?;
    }

    if manifest.sealed {
        store.seal()?;
        if store.seal_hash != manifest.seal_hash {
            return Err(StoreError::IntegrityViolation(vec![format!(
                "seal hash mismatch: manifest {:?}, content {:?}",
                manifest.seal_hash, store.seal_hash
            )]));
        }
    } else {
        let report = store.integrity_report();
        if !report.is_clean() {
            return Err(StoreError::IntegrityViolation(report.violations));
        }
    }
    Ok(store)
}
