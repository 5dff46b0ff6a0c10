use std::collections::BTreeMap;
use std::ops::Bound;

use super::*;
use crate::schema::{names, standard_schema};
use crate::value::NumRange;

fn prov(text: &str) -> Provenance {
    Provenance::new("d1", "Dosage and Administration", text)
}

fn dose_row(drug: &str, max: f64) -> BTreeMap<String, Value> {
    BTreeMap::from([
        ("drug".to_string(), Value::text(drug)),
        ("max_daily_dose".to_string(), Value::Number(max)),
    ])
}

fn small_store() -> HybridStore {
    let mut s = HybridStore::new(standard_schema());
    s.register_document("d1", "cardiology").unwrap();
    for (i, max) in [500.0, 2000.0, 1000.0, 2000.0].into_iter().enumerate() {
        s.insert_relational(names::DOSAGE, dose_row("metformin", max), prov(&format!("rule {i}"))).unwrap();
    }
    let e = |a: &str| EntityId::new(a);
    s.insert_edge(&e("Metformin"), names::INTERACTS_WITH, &e("Contrast Media"), BTreeMap::new(), prov("ix 1"))
        .unwrap();
    s.insert_edge(&e("Metformin"), names::MEMBER_OF, &e("Biguanides"), BTreeMap::new(), prov("class 1"))
        .unwrap();
    s.phi_link(&e("Metformin"), names::DOSAGE, RowKey(1)).unwrap();
    s
}

#[test]
fn row_keys_ascend_from_one() {
    let s = small_store();
    let keys: Vec<u64> = s.relational().table(names::DOSAGE).unwrap().rows().iter().map(|r| r.key.0).collect();
    assert_eq!(keys, vec![1, 2, 3, 4]);
}

#[test]
fn missing_source_text_is_rejected() {
    let mut s = small_store();
    let err = s.insert_relational(names::DOSAGE, dose_row("x", 1.0), prov("")).unwrap_err();
    assert_eq!(err, StoreError::MissingProvenance);
}

#[test]
fn unknown_table_and_column_are_rejected() {
    let mut s = small_store();
    assert!(matches!(
        s.insert_relational("Nope", dose_row("x", 1.0), prov("t")),
        Err(StoreError::UnknownTable(_))
    ));
    let mut v = dose_row("x", 1.0);
    v.insert("colour".into(), Value::text("red"));
    assert!(matches!(s.insert_relational(names::DOSAGE, v, prov("t")), Err(StoreError::UnknownColumn { .. })));
}

#[test]
fn type_mismatch_is_rejected() {
    let mut s = small_store();
    let mut v = dose_row("x", 1.0);
    v.insert("age_range".into(), Value::Bool(true));
    assert!(matches!(s.insert_relational(names::DOSAGE, v, prov("t")), Err(StoreError::TypeMismatch { .. })));
}

#[test]
fn sealed_store_refuses_writes() {
    let mut s = small_store();
    s.seal().unwrap();
    assert!(s.is_sealed());
    assert_eq!(s.insert_relational(names::DOSAGE, dose_row("x", 1.0), prov("t")), Err(StoreError::SealedStore));
    assert_eq!(s.register_document("d2", ""), Err(StoreError::SealedStore));
    assert_eq!(s.seal().unwrap_err(), StoreError::SealedStore);
}

#[test]
fn unregistered_document_blocks_sealing() {
    let mut s = small_store();
    s.insert_relational(names::DOSAGE, dose_row("x", 1.0), Provenance::new("ghost", "s", "t")).unwrap();
    match s.seal() {
        Err(StoreError::IntegrityViolation(v)) => assert!(v[0].contains("unregistered document ghost")),
        other => panic!("{other:?}"),
    }
    assert!(!s.is_sealed());
}

#[test]
fn phi_is_one_to_one() {
    let mut s = small_store();
    let m = EntityId::new("Metformin");
    assert_eq!(s.phi_forward(&m), Some((names::DOSAGE, RowKey(1))));
    assert_eq!(s.phi_backward(names::DOSAGE, RowKey(1)), Some(&m));
    assert!(matches!(s.phi_link(&m, names::DOSAGE, RowKey(2)), Err(StoreError::DuplicateMapping(_))));
    let b = EntityId::new("Biguanides");
    assert!(matches!(s.phi_link(&b, names::DOSAGE, RowKey(1)), Err(StoreError::DuplicateMapping(_))));
    assert!(matches!(
        s.phi_link(&EntityId::new("nobody"), names::DOSAGE, RowKey(2)),
        Err(StoreError::DanglingReference(_))
    ));
}

#[test]
fn knows_entities_from_either_component() {
    let s = small_store();
    assert!(s.knows_entity(&EntityId::new("metformin")));
    assert!(s.knows_entity(&EntityId::new("contrast media")));
    assert!(!s.knows_entity(&EntityId::new("warfarin")));
}

#[test]
fn index_range_matches_scan() {
    let s = small_store();
    let t = s.relational().table(names::DOSAGE).unwrap();
    let lo = Value::Number(1000.0);
    let keys = t.index_range("max_daily_dose", Bound::Included(&lo), Bound::Unbounded).unwrap();
    let scan: Vec<RowKey> = t
        .rows()
        .iter()
        .filter(|r| t.value(r, "max_daily_dose").and_then(Value::as_f64).is_some_and(|x| x >= 1000.0))
        .map(|r| r.key)
        .collect();
    assert_eq!(keys, scan);
    assert_eq!(t.index_count("max_daily_dose", &Value::Number(2000.0)), Some(2));
    assert_eq!(t.index_range("dose_text", Bound::Unbounded, Bound::Unbounded), None);
}

#[test]
fn neighbor_work_is_one_per_bucket_plus_entries() {
    let s = small_store();
    let g = s.graph();
    let m = g.vertex_index(&EntityId::new("Metformin")).unwrap();
    instrument::reset();
    let out: Vec<_> = g.neighbors(m, names::INTERACTS_WITH, Direction::Out).collect();
    assert_eq!(out.len(), 1);
    assert_eq!(instrument::adjacency_ops(), 2);
    let c = g.vertex_index(&EntityId::new("Contrast Media")).unwrap();
    assert_eq!(g.neighbors(c, names::INTERACTS_WITH, Direction::Out).count(), 0);
    assert_eq!(g.neighbors(c, names::INTERACTS_WITH, Direction::In).count(), 1);
    assert_eq!(g.neighbors(c, names::INTERACTS_WITH, Direction::Both).count(), 1);
}

#[test]
fn save_load_round_trip_keeps_hash() {
    let mut s = small_store();
    s.seal().unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_store(&s, dir.path()).unwrap();
    let back = load_store(dir.path()).unwrap();
    assert!(back.is_sealed());
    assert_eq!(back.seal_hash(), s.seal_hash());
    assert_eq!(back.content_hash(), s.content_hash());
    assert_eq!(back.phi_forward(&EntityId::new("metformin")), Some((names::DOSAGE, RowKey(1))));
}

#[test]
fn tampered_store_file_fails_to_load() {
    let mut s = small_store();
    s.seal().unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_store(&s, dir.path()).unwrap();
    let path = dir.path().join("relational.jsonl");
    let text = std::fs::read_to_string(&path).unwrap().replace("2000.0", "2500.0");
    std::fs::write(&path, text).unwrap();
    assert!(load_store(dir.path()).is_err());
}

#[test]
fn range_values_are_stored_verbatim() {
    let mut s = small_store();
    let mut v = dose_row("metformin", 1000.0);
    v.insert("crcl_range".into(), Value::Range(NumRange::between(30.0, 45.0)));
    let k = s.insert_relational(names::DOSAGE, v, prov("renal")).unwrap();
    let t = s.relational().table(names::DOSAGE).unwrap();
    let row = t.row(k).unwrap();
    assert_eq!(t.value(row, "crcl_range"), Some(&Value::Range(NumRange::between(30.0, 45.0))));
}
