use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::Bound;

use serde::{Deserialize, Serialize};

use super::instrument;
use super::{Provenance, Result, StoreError};
use crate::schema::TableDef;
use crate::value::Value;

/// Row identifier, unique and ascending within its table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RowKey(pub u64);

impl fmt::Display for RowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRow {
    pub key: RowKey,
    pub values: Vec<Value>,
    pub prov: Provenance,
}

/// Ordered index key. Every `cmp` is counted so range lookups can be
/// checked against their logarithmic bound.
#[derive(Debug, Clone)]
enum IndexKey {
    Bool(bool),
    Num(f64),
    Text(String),
}

impl IndexKey {
    fn from_value(v: &Value) -> Option<IndexKey> {
        match v {
            Value::Bool(b) => Some(IndexKey::Bool(*b)),
            Value::Number(x) => Some(IndexKey::Num(*x)),
            Value::Text(s) | Value::Enum(s) => Some(IndexKey::Text(s.clone())),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            IndexKey::Bool(_) => 0,
            IndexKey::Num(_) => 1,
            IndexKey::Text(_) => 2,
        }
    }
}

impl Ord for IndexKey {
    fn cmp(&self, other: &Self) -> Ordering {
        instrument::count_comparison();
        match (self, other) {
            (IndexKey::Bool(a), IndexKey::Bool(b)) => a.cmp(b),
            (IndexKey::Num(a), IndexKey::Num(b)) => a.total_cmp(b),
            (IndexKey::Text(a), IndexKey::Text(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for IndexKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for IndexKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for IndexKey {}

#[derive(Debug, Clone)]
pub struct Table {
    def: TableDef,
    rows: Vec<StoredRow>,
    indexes: BTreeMap<String, BTreeMap<IndexKey, Vec<RowKey>>>,
}

impl Table {
    fn new(def: &TableDef) -> Self {
        let indexes = def
            .columns
            .iter()
            .filter(|c| c.indexed)
            .map(|c| (c.name.clone(), BTreeMap::new()))
            .collect();
        Table { def: def.clone(), rows: Vec::new(), indexes }
    }

    pub fn name(&self) -> &str {
        &self.def.name
    }

    pub fn def(&self) -> &TableDef {
        &self.def
    }

    pub fn rows(&self) -> &[StoredRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, key: RowKey) -> Option<&StoredRow> {
        let idx = usize::try_from(key.0).ok()?.checked_sub(1)?;
        self.rows.get(idx)
    }

    pub fn is_indexed(&self, column: &str) -> bool {
        self.indexes.contains_key(column)
    }

    /// Row as a column-name map, nulls included.
    pub fn row_map(&self, row: &StoredRow) -> BTreeMap<String, Value> {
        self.def.columns.iter().map(|c| c.name.clone()).zip(row.values.iter().cloned()).collect()
    }

    pub fn value<'a>(&self, row: &'a StoredRow, column: &str) -> Option<&'a Value> {
        self.def.column_index(column).and_then(|i| row.values.get(i))
    }

    /// Row keys whose indexed `column` lies within the bounds, in key order.
    /// Returns `None` when the column has no index.
    pub fn index_range(
        &self,
        column: &str,
        lower: Bound<&Value>,
        upper: Bound<&Value>,
    ) -> Option<Vec<RowKey>> {
        let index = self.indexes.get(column)?;
        let conv = |b: Bound<&Value>| -> Option<Bound<IndexKey>> {
            Some(match b {
                Bound::Included(v) => Bound::Included(IndexKey::from_value(v)?),
                Bound::Excluded(v) => Bound::Excluded(IndexKey::from_value(v)?),
                Bound::Unbounded => Bound::Unbounded,
            })
        };
        let (Some(lo), Some(hi)) = (conv(lower), conv(upper)) else {
            return Some(Vec::new());
        };
        if let (Bound::Included(a) | Bound::Excluded(a), Bound::Included(b) | Bound::Excluded(b)) =
            (&lo, &hi)
        {
            match a.cmp(b) {
                Ordering::Greater => return Some(Vec::new()),
                Ordering::Equal
                    if matches!(lo, Bound::Excluded(_)) || matches!(hi, Bound::Excluded(_)) =>
                {
                    return Some(Vec::new())
                }
                _ => {}
            }
        }
        let mut keys: Vec<RowKey> =
            index.range((lo, hi)).flat_map(|(_, ks)| ks.iter().copied()).collect();
        keys.sort_unstable();
        Some(keys)
    }

    /// Size of the posting list for an exact key, if indexed.
    pub fn index_count(&self, column: &str, value: &Value) -> Option<usize> {
        let index = self.indexes.get(column)?;
        let key = IndexKey::from_value(value)?;
        Some(index.get(&key).map_or(0, Vec::len))
    }

    pub fn has_value(&self, column: &str, value: &Value) -> bool {
        if let Some(n) = self.index_count(column, value) {
            return n > 0;
        }
        self.rows.iter().any(|r| self.value(r, column) == Some(value))
    }
}

/// Checks a stored value vector against its table definition.
pub(crate) fn conforms(def: &TableDef, values: &[Value]) -> std::result::Result<(), String> {
    if values.len() != def.columns.len() {
        return Err(format!("expected {} values, got {}", def.columns.len(), values.len()));
    }
    for (c, v) in def.columns.iter().zip(values) {
        if v.is_null() {
            if !c.nullable {
                return Err(format!("null in non-nullable column {}", c.name));
            }
            continue;
        }
        if matches!(v, Value::Quantity { .. }) {
            return Err(format!("unnormalized quantity in {}", c.name));
        }
        v.clone().coerce(&c.ty).map_err(|e| format!("{}: {e}", c.name))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct RelationalComponent {
    tables: BTreeMap<String, Table>,
}

impl RelationalComponent {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.get(name)
    }

    pub fn tables(&self) -> impl Iterator<Item = &Table> {
        self.tables.values()
    }

    pub fn row(&self, table: &str, key: RowKey) -> Option<&StoredRow> {
        self.tables.get(table)?.row(key)
    }

    pub fn row_count(&self) -> usize {
        self.tables.values().map(Table::len).sum()
    }

    pub(crate) fn insert(
        &mut self,
        def: &TableDef,
        mut values: BTreeMap<String, Value>,
        prov: Provenance,
    ) -> Result<RowKey> {
        let mut row = Vec::with_capacity(def.columns.len());
        for col in &def.columns {
            let raw = values.remove(&col.name).unwrap_or(Value::Null);
            let mismatch = |reason: String| StoreError::TypeMismatch {
                table: def.name.clone(),
                column: col.name.clone(),
                reason,
            };
            let v = raw.coerce(&col.ty).map_err(mismatch)?;
            if v.is_null() && !col.nullable {
                return Err(mismatch("null in non-nullable column".into()));
            }
            row.push(v);
        }
        if let Some(extra) = values.into_keys().next() {
            return Err(StoreError::UnknownColumn { table: def.name.clone(), column: extra });
        }
        let table = self.tables.entry(def.name.clone()).or_insert_with(|| Table::new(def));
        let key = RowKey(table.rows.len() as u64 + 1);
        for (i, col) in def.columns.iter().enumerate() {
            if let Some(index) = table.indexes.get_mut(&col.name) {
                if let Some(k) = IndexKey::from_value(&row[i]) {
                    index.entry(k).or_default().push(key);
                }
            }
        }
        table.rows.push(StoredRow { key, values: row, prov });
        Ok(key)
    }

    /// Restores a row verbatim (used by the loader). Keys must arrive in order.
    pub(crate) fn restore(&mut self, def: &TableDef, row: StoredRow) -> Result<()> {
        let table = self.tables.entry(def.name.clone()).or_insert_with(|| Table::new(def));
        if row.key.0 != table.rows.len() as u64 + 1 {
            return Err(StoreError::Format(format!(
                "row key {} out of sequence in {}",
                row.key, def.name
            )));
        }
        for (i, col) in def.columns.iter().enumerate() {
            if let (Some(index), Some(v)) = (table.indexes.get_mut(&col.name), row.values.get(i)) {
                if let Some(k) = IndexKey::from_value(v) {
                    index.entry(k).or_default().push(row.key);
                }
            }
        }
        table.rows.push(row);
        Ok(())
    }
}
