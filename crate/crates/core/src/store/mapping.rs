use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EntityId, Result, RowKey, StoreError};

/// One vertex/row pair of the mapping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappedPair {
    pub vertex: EntityId,
    pub table: String,
    pub row: RowKey,
}

/// Partial bijection between graph vertices and relational rows.
#[derive(Debug, Clone, Default)]
pub struct MappingTable {
    forward: BTreeMap<EntityId, (String, RowKey)>,
    backward: BTreeMap<(String, RowKey), EntityId>,
}

impl MappingTable {
    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub(crate) fn link(&mut self, vertex: &EntityId, table: &str, row: RowKey) -> Result<()> {
        if let Some((t, r)) = self.forward.get(vertex) {
            return Err(StoreError::DuplicateMapping(format!(
                "vertex {vertex} already mapped to {t}#{r}"
            )));
        }
        let key = (table.to_string(), row);
        if let Some(v) = self.backward.get(&key) {
            return Err(StoreError::DuplicateMapping(format!(
                "row {table}#{row} already mapped to {v}"
            )));
        }
        self.forward.insert(vertex.clone(), key.clone());
        self.backward.insert(key, vertex.clone());
        Ok(())
    }

    pub fn forward(&self, vertex: &EntityId) -> Option<(&str, RowKey)> {
        self.forward.get(vertex).map(|(t, r)| (t.as_str(), *r))
    }

    pub fn backward(&self, table: &str, row: RowKey) -> Option<&EntityId> {
        self.backward.get(&(table.to_string(), row))
    }

    pub fn pairs(&self) -> impl Iterator<Item = MappedPair> + '_ {
        self.forward.iter().map(|(v, (t, r))| MappedPair {
            vertex: v.clone(),
            table: t.clone(),
            row: *r,
        })
    }

    pub(crate) fn violations(
        &self,
        vertex_exists: impl Fn(&EntityId) -> bool,
        row_exists: impl Fn(&str, RowKey) -> bool,
    ) -> Vec<String> {
        let mut out = Vec::new();
        if self.forward.len() != self.backward.len() {
            out.push(format!(
                "mapping not bijective: {} forward vs {} backward entries",
                self.forward.len(),
                self.backward.len()
            ));
        }
        for (v, (t, r)) in &self.forward {
            if self.backward.get(&(t.clone(), *r)) != Some(v) {
                out.push(format!("mapping {v} -> {t}#{r} has no matching inverse"));
            }
            if !vertex_exists(v) {
                out.push(format!("mapping references missing vertex {v}"));
            }
            if !row_exists(t, *r) {
                out.push(format!("mapping references missing row {t}#{r}"));
            }
        }
        out
    }
}
