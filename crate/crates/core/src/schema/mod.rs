//! Versioned hybrid schema: relational tables, graph labels and edge types,
//! and the table-to-label anchors used by the vertex/row mapping.
//!
//! Schemas only ever grow. Every change goes through [`HybridSchema::apply`],
//! which bumps the version and records a [`SchemaDiff`] in the embedded
//! history, so replaying the history over the seed reproduces the schema.

mod isr;
mod proposers;
mod stratify;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::ColumnType;

pub use isr::{
    isr_step, run_isr, stratified_order, DecisionRecord, GapDetector, IsrOutcome, IsrState,
    Classification, ProposalOutcome, SchemaChangeProposal, StratifiedDoc, DEFAULT_N_STABLE,
};
pub use proposers::{
    read_proposal_log, write_proposal_log, ExpertPolicy, InteractivePolicy, ReplayProposer,
    RuleTemplateDetector, ScriptedPolicy, Verdict,
};
pub use stratify::{stratify, DataNature, FactCandidate, StoreTarget};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemaError {
    #[error("illegal schema change: {0}")]
    IllegalChange(String),
    #[error("schema i/o: {0}")]
    Io(String),
    #[error("schema json: {0}")]
    Json(String),
    #[error("replay of schema history diverged: {0}")]
    Replay(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
    #[serde(default)]
    pub nullable: bool,
    #[serde(default)]
    pub indexed: bool,
}

impl ColumnDef {
    pub fn new(name: &str, ty: ColumnType) -> Self {
        ColumnDef { name: name.to_string(), ty, nullable: true, indexed: false }
    }

    pub fn required(mut self) -> Self {
        self.nullable = false;
        self
    }

    pub fn indexed(mut self) -> Self {
        self.indexed = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<ColumnDef>,
}

impl TableDef {
    pub fn new(name: &str, columns: Vec<ColumnDef>) -> Self {
        TableDef { name: name.to_string(), columns }
    }

    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeTypeDef {
    pub name: String,
    pub src_label: String,
    pub dst_label: String,
}

impl EdgeTypeDef {
    pub fn new(name: &str, src: &str, dst: &str) -> Self {
        EdgeTypeDef { name: name.into(), src_label: src.into(), dst_label: dst.into() }
    }
}

/// Declares that rows of `table` describe the entity named in `column`,
/// which lives in the graph under `label`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingDecl {
    pub table: String,
    pub column: String,
    pub label: String,
}

/// A single additive schema change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum SchemaChange {
    AddTable { table: TableDef },
    AddColumn { table: String, column: ColumnDef },
    AddEdgeType { edge_type: EdgeTypeDef },
    AddLabel { label: String },
}

impl SchemaChange {
    pub fn targets_relational(&self) -> bool {
        matches!(self, SchemaChange::AddTable { .. } | SchemaChange::AddColumn { .. })
    }

    pub fn describe(&self) -> String {
        match self {
            SchemaChange::AddTable { table } => format!("add table {}", table.name),
            SchemaChange::AddColumn { table, column } => {
                format!("add column {}.{}", table, column.name)
            }
            SchemaChange::AddEdgeType { edge_type } => format!(
                "add edge type {} ({} -> {})",
                edge_type.name, edge_type.src_label, edge_type.dst_label
            ),
            SchemaChange::AddLabel { label } => format!("add label {label}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaDiff {
    pub from_version: u32,
    pub to_version: u32,
    pub changes: Vec<SchemaChange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridSchema {
    pub version: u32,
    pub tables: BTreeMap<String, TableDef>,
    pub node_labels: BTreeSet<String>,
    pub edge_types: BTreeMap<String, EdgeTypeDef>,
    #[serde(default)]
    pub mapping_decls: Vec<MappingDecl>,
    #[serde(default)]
    pub history: Vec<SchemaDiff>,
}

impl HybridSchema {
    pub fn empty() -> Self {
        HybridSchema {
            version: 1,
            tables: BTreeMap::new(),
            node_labels: BTreeSet::new(),
            edge_types: BTreeMap::new(),
            mapping_decls: Vec::new(),
            history: Vec::new(),
        }
    }

    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.get(name)
    }

    pub fn edge_type(&self, name: &str) -> Option<&EdgeTypeDef> {
        self.edge_types.get(name)
    }

    /// Checks a change against the current schema without applying it.
    pub fn validate_change(&self, change: &SchemaChange) -> Result<(), SchemaError> {
        let illegal = |m: String| Err(SchemaError::IllegalChange(m));
        match change {
            SchemaChange::AddTable { table } => {
                if self.tables.contains_key(&table.name) {
                    return illegal(format!("table {} already exists", table.name));
                }
                if table.columns.is_empty() {
                    return illegal(format!("table {} has no columns", table.name));
                }
                let mut seen = BTreeSet::new();
                for c in &table.columns {
                    if !seen.insert(&c.name) {
                        return illegal(format!("duplicate column {}.{}", table.name, c.name));
                    }
                    if c.indexed && !c.ty.indexable() {
                        return illegal(format!("column {}.{} cannot be indexed", table.name, c.name));
                    }
                }
                Ok(())
            }
            SchemaChange::AddColumn { table, column } => {
                let Some(def) = self.tables.get(table) else {
                    return illegal(format!("unknown table {table}"));
                };
                if def.column(&column.name).is_some() {
                    return illegal(format!("column {table}.{} already exists", column.name));
                }
                if !column.nullable {
                    // existing rows would have no value for it
                    return illegal(format!("added column {table}.{} must be nullable", column.name));
                }
                if column.indexed && !column.ty.indexable() {
                    return illegal(format!("column {table}.{} cannot be indexed", column.name));
                }
                Ok(())
            }
            SchemaChange::AddEdgeType { edge_type } => {
                if self.edge_types.contains_key(&edge_type.name) {
                    return illegal(format!("edge type {} already exists", edge_type.name));
                }
                for label in [&edge_type.src_label, &edge_type.dst_label] {
                    if !self.node_labels.contains(label) {
                        return illegal(format!(
                            "edge type {} references undeclared label {label}",
                            edge_type.name
                        ));
                    }
                }
                Ok(())
            }
            SchemaChange::AddLabel { label } => {
                if label.trim().is_empty() {
                    return illegal("empty label".into());
                }
                if self.node_labels.contains(label) {
                    return illegal(format!("label {label} already exists"));
                }
                Ok(())
            }
        }
    }

    fn apply_unchecked(&mut self, change: &SchemaChange) {
        match change {
            SchemaChange::AddTable { table } => {
                self.tables.insert(table.name.clone(), table.clone());
            }
            SchemaChange::AddColumn { table, column } => {
                if let Some(t) = self.tables.get_mut(table) {
                    t.columns.push(column.clone());
                }
            }
            SchemaChange::AddEdgeType { edge_type } => {
                self.edge_types.insert(edge_type.name.clone(), edge_type.clone());
            }
            SchemaChange::AddLabel { label } => {
                self.node_labels.insert(label.clone());
            }
        }
    }

    /// Applies a batch of changes as one new version. All-or-nothing.
    pub fn apply(&self, changes: &[SchemaChange]) -> Result<HybridSchema, SchemaError> {
        if changes.is_empty() {
            return Err(SchemaError::IllegalChange("empty change set".into()));
        }
        let mut next = self.clone();
        for change in changes {
            next.validate_change(change)?;
            next.apply_unchecked(change);
        }
        next.version = self.version + 1;
        next.history.push(SchemaDiff {
            from_version: self.version,
            to_version: next.version,
            changes: changes.to_vec(),
        });
        Ok(next)
    }

    /// Rebuilds a schema by replaying `history` on top of `seed`.
    pub fn replay(seed: &HybridSchema, history: &[SchemaDiff]) -> Result<HybridSchema, SchemaError> {
        let mut schema = seed.clone();
        for diff in history.iter().skip(seed.history.len()) {
            if diff.from_version != schema.version {
                return Err(SchemaError::Replay(format!(
                    "diff starts at v{} but schema is at v{}",
                    diff.from_version, schema.version
                )));
            }
            schema = schema.apply(&diff.changes)?;
        }
        Ok(schema)
    }

    /// Structural validation used when loading a schema file.
    pub fn check(&self) -> Result<(), SchemaError> {
        for e in self.edge_types.values() {
            for label in [&e.src_label, &e.dst_label] {
                if !self.node_labels.contains(label) {
                    return Err(SchemaError::IllegalChange(format!(
                        "edge type {} references undeclared label {label}",
                        e.name
                    )));
                }
            }
        }
        for m in &self.mapping_decls {
            let ok = self.tables.get(&m.table).and_then(|t| t.column(&m.column)).is_some()
                && self.node_labels.contains(&m.label);
            if !ok {
                return Err(SchemaError::IllegalChange(format!(
                    "mapping {}.{} -> {} references unknown structure",
                    m.table, m.column, m.label
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, SchemaError> {
        let schema: HybridSchema =
            serde_json::from_str(s).map_err(|e| SchemaError::Json(e.to_string()))?;
        schema.check()?;
        Ok(schema)
    }

    pub fn save(&self, path: &Path) -> Result<(), SchemaError> {
        std::fs::write(path, self.to_json()).map_err(|e| SchemaError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SchemaError> {
        let s = std::fs::read_to_string(path).map_err(|e| SchemaError::Io(e.to_string()))?;
        Self::from_json(&s)
    }
}

/// Table and edge-type names used by the built-in pharmaceutical schema.
pub mod names {
    pub const DOSAGE: &str = "DosageRules";
    pub const CONTRAINDICATIONS: &str = "Contraindications";
    pub const SPECIAL_POPULATIONS: &str = "SpecialPopulationRules";
    pub const INDICATIONS: &str = "Indications";

    pub const DRUG: &str = "Drug";
    pub const INGREDIENT: &str = "Ingredient";
    pub const CLASS: &str = "Class";

    pub const INTERACTS_WITH: &str = "INTERACTS_WITH";
    pub const HAS_INGREDIENT: &str = "HAS_INGREDIENT";
    pub const BELONGS_TO: &str = "BELONGS_TO";
    pub const MEMBER_OF: &str = "MEMBER_OF";
    pub const CLASS_INTERACTS_WITH: &str = "CLASS_INTERACTS_WITH";
}

pub const HEPATIC_LEVELS: &[&str] = &["None", "Mild", "Moderate", "Severe"];

fn condition_columns() -> Vec<ColumnDef> {
    vec![
        ColumnDef::new("age_range", ColumnType::range(Some("years"))),
        ColumnDef::new("weight_range", ColumnType::range(Some("kg"))),
        ColumnDef::new("crcl_range", ColumnType::range(Some("ml/min"))),
        ColumnDef::new("hepatic_min", ColumnType::enumeration(HEPATIC_LEVELS)),
        ColumnDef::new("pregnancy", ColumnType::Boolean),
    ]
}

fn drug_column() -> ColumnDef {
    ColumnDef::new("drug", ColumnType::Text).required().indexed()
}

/// Full table definitions of the built-in schema, keyed by table name.
pub fn standard_tables() -> Vec<TableDef> {
    use names::*;
    let mut dosage = vec![drug_column()];
    dosage.extend(condition_columns());
    dosage.push(ColumnDef::new("max_daily_dose", ColumnType::number(Some("mg"))).indexed());
    dosage.push(ColumnDef::new("dose_text", ColumnType::Text));

    let mut contra = vec![drug_column(), ColumnDef::new("condition", ColumnType::Text).indexed()];
    contra.extend(condition_columns());

    let mut special =
        vec![drug_column(), ColumnDef::new("population", ColumnType::Text).required()];
    special.extend(condition_columns());
    special.push(ColumnDef::new("recommendation", ColumnType::Text));

    let indications = vec![
        drug_column(),
        ColumnDef::new("indication", ColumnType::Text).required().indexed(),
    ];

    vec![
        TableDef::new(DOSAGE, dosage),
        TableDef::new(CONTRAINDICATIONS, contra),
        TableDef::new(SPECIAL_POPULATIONS, special),
        TableDef::new(INDICATIONS, indications),
    ]
}

pub fn standard_edge_types() -> Vec<EdgeTypeDef> {
    use names::*;
    vec![
        EdgeTypeDef::new(INTERACTS_WITH, DRUG, DRUG),
        EdgeTypeDef::new(HAS_INGREDIENT, DRUG, INGREDIENT),
        EdgeTypeDef::new(BELONGS_TO, INGREDIENT, CLASS),
        EdgeTypeDef::new(MEMBER_OF, DRUG, CLASS),
        EdgeTypeDef::new(CLASS_INTERACTS_WITH, CLASS, CLASS),
    ]
}

fn standard_mappings() -> Vec<MappingDecl> {
    use names::*;
    [DOSAGE, INDICATIONS, CONTRAINDICATIONS, SPECIAL_POPULATIONS]
        .iter()
        .map(|t| MappingDecl { table: t.to_string(), column: "drug".into(), label: DRUG.into() })
        .collect()
}

/// The minimal starting point for schema refinement: dose limits keyed by
/// drug and direct drug-drug interactions.
pub fn seed_schema() -> HybridSchema {
    use names::*;
    let mut s = HybridSchema::empty();
    s.tables.insert(
        DOSAGE.into(),
        TableDef::new(
            DOSAGE,
            vec![
                drug_column(),
                ColumnDef::new("max_daily_dose", ColumnType::number(Some("mg"))).indexed(),
                ColumnDef::new("dose_text", ColumnType::Text),
            ],
        ),
    );
    s.node_labels.insert(DRUG.into());
    s.edge_types.insert(INTERACTS_WITH.into(), EdgeTypeDef::new(INTERACTS_WITH, DRUG, DRUG));
    s.mapping_decls.push(MappingDecl {
        table: DOSAGE.into(),
        column: "drug".into(),
        label: DRUG.into(),
    });
    s
}

/// The built-in schema the deterministic extractors target.
pub fn standard_schema() -> HybridSchema {
    let mut s = HybridSchema::empty();
    for t in standard_tables() {
        s.tables.insert(t.name.clone(), t);
    }
    for l in [names::DRUG, names::INGREDIENT, names::CLASS] {
        s.node_labels.insert(l.into());
    }
    for e in standard_edge_types() {
        s.edge_types.insert(e.name.clone(), e);
    }
    s.mapping_decls = standard_mappings();
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_schema_is_consistent() {
        standard_schema().check().unwrap();
        seed_schema().check().unwrap();
    }

    #[test]
    fn apply_bumps_version_and_records_diff() {
        let seed = seed_schema();
        let change = SchemaChange::AddLabel { label: "Ingredient".into() };
        let next = seed.apply(std::slice::from_ref(&change)).unwrap();
        assert_eq!(next.version, seed.version + 1);
        assert_eq!(next.history.len(), 1);
        assert_eq!(next.history[0].changes, vec![change]);
        // seed untouched
        assert!(!seed.node_labels.contains("Ingredient"));
    }

    #[test]
    fn edge_type_with_undeclared_label_is_illegal() {
        let seed = seed_schema();
        let bad = SchemaChange::AddEdgeType {
            edge_type: EdgeTypeDef::new("HAS_INGREDIENT", "Drug", "Ingredient"),
        };
        assert!(matches!(seed.apply(&[bad]), Err(SchemaError::IllegalChange(_))));
    }

    #[test]
    fn replay_reproduces_schema_bytes() {
        let seed = seed_schema();
        let s1 = seed
            .apply(&[SchemaChange::AddLabel { label: "Class".into() }])
            .unwrap()
            .apply(&[SchemaChange::AddColumn {
                table: names::DOSAGE.into(),
                column: ColumnDef::new("crcl_range", ColumnType::range(Some("ml/min"))),
            }])
            .unwrap();
        let replayed = HybridSchema::replay(&seed, &s1.history).unwrap();
        assert_eq!(replayed.to_json(), s1.to_json());
    }

    #[test]
    fn json_round_trip() {
        let s = standard_schema();
        assert_eq!(HybridSchema::from_json(&s.to_json()).unwrap(), s);
    }
}
