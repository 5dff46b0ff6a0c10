use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::ops::Bound;

use serde::{Deserialize, Serialize};

use super::{Comparison, ConstraintQuery, Predicate, QueryError};
use crate::schema::TableDef;
use crate::store::{HybridStore, Provenance, RowKey, StoredRow, Table};
use crate::value::{ColumnType, Value};

/// One matching row with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowHit {
    pub table: String,
    pub key: RowKey,
    pub values: BTreeMap<String, Value>,
    pub prov: Provenance,
}

fn mismatch(def: &TableDef, p: &Predicate, reason: impl Into<String>) -> QueryError {
    QueryError::OperatorMismatch {
        table: def.name.clone(),
        column: p.column.clone(),
        op: p.cmp.symbol().to_string(),
        reason: reason.into(),
    }
}

/// Type-checks predicates and coerces their operands to column types.
fn bind(def: &TableDef, predicates: &[Predicate]) -> Result<Vec<(usize, Comparison)>, QueryError> {
    predicates
        .iter()
        .map(|p| {
            let idx = def.column_index(&p.column).ok_or_else(|| QueryError::UnknownColumn {
                table: def.name.clone(),
                column: p.column.clone(),
            })?;
            let ty = &def.columns[idx].ty;
            let is_range = matches!(ty, ColumnType::Range { .. });
            let coerce = |v: &Value| {
                if v.is_null() {
                    return Err(mismatch(def, p, "null operand"));
                }
                v.clone().coerce(ty).map_err(|e| mismatch(def, p, e))
            };
            let cmp = match &p.cmp {
                Comparison::ContainsPoint(x) if is_range => Comparison::ContainsPoint(*x),
                Comparison::ContainsPoint(_) => return Err(mismatch(def, p, "column is not a range")),
                _ if is_range => return Err(mismatch(def, p, "range columns only support @>")),
                Comparison::Eq(v) => Comparison::Eq(coerce(v)?),
                Comparison::Ne(v) => Comparison::Ne(coerce(v)?),
                Comparison::In(vs) => Comparison::In(vs.iter().map(coerce).collect::<Result<_, _>>()?),
                ordered => {
                    if !matches!(ty, ColumnType::Number { .. } | ColumnType::Text) {
                        return Err(mismatch(def, p, format!("{} is not ordered", ty.name())));
                    }
                    match ordered {
                        Comparison::Lt(v) => Comparison::Lt(coerce(v)?),
                        Comparison::Le(v) => Comparison::Le(coerce(v)?),
                        Comparison::Gt(v) => Comparison::Gt(coerce(v)?),
                        Comparison::Ge(v) => Comparison::Ge(coerce(v)?),
                        _ => unreachable!("other operators handled above"),
                    }
                }
            };
            Ok((idx, cmp))
        })
        .collect()
}

/// Evaluates one bound comparison; null cells never satisfy a predicate.
fn holds(cell: &Value, cmp: &Comparison) -> bool {
    if cell.is_null() {
        return false;
    }
    let ord = |v: &Value| cell.compare(v);
    match cmp {
        Comparison::Eq(v) => ord(v) == Some(Ordering::Equal),
        Comparison::Ne(v) => matches!(ord(v), Some(o) if o != Ordering::Equal),
        Comparison::Lt(v) => ord(v) == Some(Ordering::Less),
        Comparison::Le(v) => matches!(ord(v), Some(Ordering::Less | Ordering::Equal)),
        Comparison::Gt(v) => ord(v) == Some(Ordering::Greater),
        Comparison::Ge(v) => matches!(ord(v), Some(Ordering::Greater | Ordering::Equal)),
        Comparison::In(vs) => vs.iter().any(|v| ord(v) == Some(Ordering::Equal)),
        Comparison::ContainsPoint(x) => cell.as_range().is_some_and(|r| r.contains(*x)),
    }
}

/// The more restrictive of two bounds on the same side; `want` is the
/// ordering of a more restrictive value relative to a less restrictive one.
fn tighter<'a>(old: Bound<&'a Value>, new: Bound<&'a Value>, want: Ordering) -> Bound<&'a Value> {
    let (Bound::Included(o) | Bound::Excluded(o)) = old else { return new };
    let (Bound::Included(n) | Bound::Excluded(n)) = new else { return old };
    match n.compare(o) {
        Some(ord) if ord == want => new,
        Some(Ordering::Equal) if matches!(new, Bound::Excluded(_)) => new,
        _ => old,
    }
}

/// Candidate row keys from the most selective usable index, if any.
fn index_candidates(table: &Table, bound: &[(usize, Comparison)]) -> Option<Vec<RowKey>> {
    let def = table.def();
    let best_eq = bound
        .iter()
        .filter_map(|(i, c)| match c {
            Comparison::Eq(v) => {
                let col = &def.columns[*i].name;
                table.index_count(col, v).map(|n| (n, col, v))
            }
            _ => None,
        })
        .min_by_key(|(n, _, _)| *n);
    if let Some((_, col, v)) = best_eq {
        return table.index_range(col, Bound::Included(v), Bound::Included(v));
    }
    // Otherwise tighten every range predicate on the first indexed ordered column.
    let (col_idx, _) = bound.iter().find(|(i, c)| {
        table.is_indexed(&def.columns[*i].name)
            && matches!(c, Comparison::Lt(_) | Comparison::Le(_) | Comparison::Gt(_) | Comparison::Ge(_))
    })?;
    let mut lower: Bound<&Value> = Bound::Unbounded;
    let mut upper: Bound<&Value> = Bound::Unbounded;
    for (_, c) in bound.iter().filter(|(i, _)| i == col_idx) {
        match c {
            Comparison::Gt(v) => lower = tighter(lower, Bound::Excluded(v), Ordering::Greater),
            Comparison::Ge(v) => lower = tighter(lower, Bound::Included(v), Ordering::Greater),
            Comparison::Lt(v) => upper = tighter(upper, Bound::Excluded(v), Ordering::Less),
            Comparison::Le(v) => upper = tighter(upper, Bound::Included(v), Ordering::Less),
            _ => {}
        }
    }
    table.index_range(&def.columns[*col_idx].name, lower, upper)
}

fn hit(table: &Table, row: &StoredRow) -> RowHit {
    RowHit {
        table: table.name().to_string(),
        key: row.key,
        values: table.row_map(row),
        prov: row.prov.clone(),
    }
}

/// Runs a conjunctive selection. Uses the smallest equality posting list
/// among indexed columns, else an indexed range, else a scan; the residual
/// predicates are checked row by row. Results come back in row-key order.
pub fn execute_constraint(store: &HybridStore, q: &ConstraintQuery) -> Result<Vec<RowHit>, QueryError> {
    let def = store
        .schema()
        .table(&q.table)
        .ok_or_else(|| QueryError::UnknownTable(q.table.clone()))?;
    let bound = bind(def, &q.predicates)?;
    let Some(table) = store.relational().table(&q.table) else {
        return Ok(Vec::new());
    };
    if table.def().columns.len() != def.columns.len() {
        return Err(QueryError::UnknownTable(format!("{} (schema drift)", q.table)));
    }
    let matches = |row: &StoredRow| bound.iter().all(|(i, c)| holds(&row.values[*i], c));
    Ok(match index_candidates(table, &bound) {
        Some(keys) => keys
            .into_iter()
            .filter_map(|k| table.row(k))
            .filter(|r| matches(r))
            .map(|r| hit(table, r))
            .collect(),
        None => table.rows().iter().filter(|r| matches(r)).map(|r| hit(table, r)).collect(),
    })
}

/// Linear scan with the same semantics, used as a test oracle.
#[cfg(test)]
pub(crate) fn scan(store: &HybridStore, q: &ConstraintQuery) -> Result<Vec<RowHit>, QueryError> {
    let def = store.schema().table(&q.table).ok_or_else(|| QueryError::UnknownTable(q.table.clone()))?;
    let bound = bind(def, &q.predicates)?;
    let Some(table) = store.relational().table(&q.table) else { return Ok(Vec::new()) };
    Ok(table
        .rows()
        .iter()
        .filter(|r| bound.iter().all(|(i, c)| holds(&r.values[*i], c)))
        .map(|r| hit(table, r))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::Predicate;
    use crate::schema::standard_schema;
    use crate::value::NumRange;

    fn fixture() -> HybridStore {
        let mut s = HybridStore::new(standard_schema());
        s.register_document("d", "").unwrap();
        let drugs = ["Metformin", "Lisinopril", "Metformin", "Warfarin", "Metformin", "Lisinopril"];
        for (i, d) in drugs.iter().cycle().take(12).enumerate() {
            let mut v = BTreeMap::new();
            v.insert("drug".into(), Value::text(d.to_lowercase()));
            v.insert("max_daily_dose".into(), Value::Number(250.0 * (i + 1) as f64));
            if i % 3 == 0 {
                v.insert("crcl_range".into(), Value::Range(NumRange::below(30.0)));
            }
            s.insert_relational("DosageRules", v, Provenance::new("d", "Dosage", &format!("line {i}"))).unwrap();
        }
        s
    }

    fn q(preds: Vec<Predicate>) -> ConstraintQuery {
        ConstraintQuery { table: "DosageRules".into(), predicates: preds }
    }

    #[test]
    fn drug_equality_hits_exactly_the_matching_rows() {
        let s = fixture();
        let out = execute_constraint(&s, &q(vec![Predicate::new("drug", Comparison::Eq(Value::text("metformin")))])).unwrap();
        assert_eq!(out.len(), 6);
        assert_eq!(out, scan(&s, &q(vec![Predicate::new("drug", Comparison::Eq(Value::text("metformin")))])).unwrap());
    }

    #[test]
    fn empty_predicates_return_whole_table() {
        assert_eq!(execute_constraint(&fixture(), &q(vec![])).unwrap().len(), 12);
    }

    #[test]
    fn range_point_containment() {
        let out = execute_constraint(&fixture(), &q(vec![Predicate::new("crcl_range", Comparison::ContainsPoint(25.0))])).unwrap();
        assert_eq!(out.len(), 4);
        let none = execute_constraint(&fixture(), &q(vec![Predicate::new("crcl_range", Comparison::ContainsPoint(30.0))])).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn indexed_numeric_range() {
        let s = fixture();
        let query = q(vec![
            Predicate::new("max_daily_dose", Comparison::Gt(Value::Number(500.0))),
            Predicate::new("max_daily_dose", Comparison::Le(Value::Number(1500.0))),
        ]);
        let out = execute_constraint(&s, &query).unwrap();
        assert_eq!(out.iter().map(|h| h.key.0).collect::<Vec<_>>(), vec![3, 4, 5, 6]);
        assert_eq!(out, scan(&s, &query).unwrap());
    }

    #[test]
    fn schema_errors() {
        let s = fixture();
        assert!(matches!(
            execute_constraint(&s, &q(vec![Predicate::new("nope", Comparison::Eq(Value::Number(1.0)))])),
            Err(QueryError::UnknownColumn { .. })
        ));
        assert!(matches!(
            execute_constraint(&s, &q(vec![Predicate::new("crcl_range", Comparison::Eq(Value::Number(1.0)))])),
            Err(QueryError::OperatorMismatch { .. })
        ));
        assert!(matches!(
            execute_constraint(&s, &q(vec![Predicate::new("drug", Comparison::ContainsPoint(1.0))])),
            Err(QueryError::OperatorMismatch { .. })
        ));
    }
}
