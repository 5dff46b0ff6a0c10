//! Verification tasks compiled into a small hybrid query IR, executed
//! in-process against a store.
//!
//! Query construction never takes free text: table, column, label and edge
//! names come from the schema constants, and values are typed.

mod constraint;
mod trace;
mod traversal;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::names;
use crate::store::{Direction, EntityId, HybridStore};
use crate::value::Value;

pub use constraint::{execute_constraint, RowHit};
pub use trace::render_trace;
pub use traversal::{execute_traversal, Path};

/// Default cap on traversal pattern length.
pub const DEFAULT_MAX_DEPTH: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("unknown drug {0}")]
    UnknownDrug(EntityId),
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("unknown column {table}.{column}")]
    UnknownColumn { table: String, column: String },
    #[error("operator {op} does not apply to {table}.{column}: {reason}")]
    OperatorMismatch { table: String, column: String, op: String, reason: String },
    #[error("unknown label {0}")]
    UnknownLabel(String),
    #[error("unknown edge type {0}")]
    UnknownEdgeType(String),
    #[error("invalid pattern: {0}")]
    InvalidPattern(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Indication,
    Dosage,
    Contraindication,
    SpecialPopulation,
    Interaction,
    Allergy,
}

impl Category {
    /// The five prescription error categories, in plan order.
    pub const PLANTABLE: [Category; 5] = [
        Category::Indication,
        Category::Dosage,
        Category::Contraindication,
        Category::SpecialPopulation,
        Category::Interaction,
    ];

    pub fn task_type(self) -> TaskType {
        match self {
            Category::Interaction | Category::Allergy => TaskType::Topology,
            _ => TaskType::Constraint,
        }
    }

    pub fn arity(self) -> usize {
        if self == Category::Interaction {
            2
        } else {
            1
        }
    }

    /// Table holding this category's rules, for constraint categories.
    pub fn table(self) -> Option<&'static str> {
        match self {
            Category::Indication => Some(names::INDICATIONS),
            Category::Dosage => Some(names::DOSAGE),
            Category::Contraindication => Some(names::CONTRAINDICATIONS),
            Category::SpecialPopulation => Some(names::SPECIAL_POPULATIONS),
            Category::Interaction | Category::Allergy => None,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskType {
    Constraint,
    Topology,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationTask {
    pub id: String,
    pub category: Category,
    pub task_type: TaskType,
    pub drugs: Vec<EntityId>,
}

impl VerificationTask {
    /// Builds a task, enforcing arity and distinctness of the subjects.
    pub fn new(id: &str, category: Category, drugs: Vec<EntityId>) -> Result<Self, QueryError> {
        let task = VerificationTask {
            id: id.to_string(),
            category,
            task_type: category.task_type(),
            drugs,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<(), QueryError> {
        if self.task_type != self.category.task_type() {
            return Err(QueryError::InvalidTask(format!(
                "{} task must be {:?}",
                self.category,
                self.category.task_type()
            )));
        }
        if self.drugs.len() != self.category.arity() {
            return Err(QueryError::InvalidTask(format!(
                "{} task needs {} drug(s), got {}",
                self.category,
                self.category.arity(),
                self.drugs.len()
            )));
        }
        if self.drugs.len() == 2 && self.drugs[0] == self.drugs[1] {
            return Err(QueryError::InvalidTask(format!(
                "interaction of {} with itself",
                self.drugs[0]
            )));
        }
        if self.drugs.iter().any(|d| d.as_str().is_empty()) {
            return Err(QueryError::InvalidTask("empty drug id".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "value", rename_all = "snake_case")]
pub enum Comparison {
    Eq(Value),
    Ne(Value),
    Lt(Value),
    Le(Value),
    Gt(Value),
    Ge(Value),
    In(Vec<Value>),
    /// Range-valued column contains the point.
    ContainsPoint(f64),
}

impl Comparison {
    pub fn symbol(&self) -> &'static str {
        match self {
            Comparison::Eq(_) => "=",
            Comparison::Ne(_) => "!=",
            Comparison::Lt(_) => "<",
            Comparison::Le(_) => "<=",
            Comparison::Gt(_) => ">",
            Comparison::Ge(_) => ">=",
            Comparison::In(_) => "IN",
            Comparison::ContainsPoint(_) => "@>",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub column: String,
    #[serde(flatten)]
    pub cmp: Comparison,
}

impl Predicate {
    pub fn new(column: &str, cmp: Comparison) -> Self {
        Predicate { column: column.to_string(), cmp }
    }
}

/// Conjunctive selection over one table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintQuery {
    pub table: String,
    pub predicates: Vec<Predicate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSelector {
    pub label: String,
    pub id: EntityId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub edge_type: String,
    pub dir: Direction,
    pub target_label: String,
}

impl Step {
    pub fn new(edge_type: &str, dir: Direction, target_label: &str) -> Self {
        Step { edge_type: edge_type.into(), dir, target_label: target_label.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnSpec {
    Paths,
    Nodes,
}

/// Fixed-length path pattern from a start vertex. Every step must match;
/// `max_depth` caps the pattern length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraversalQuery {
    pub start: NodeSelector,
    pub steps: Vec<Step>,
    pub max_depth: usize,
    /// Required final vertex, if any.
    pub end: Option<NodeSelector>,
    pub returns: ReturnSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", content = "queries", rename_all = "snake_case")]
pub enum HybridQuery {
    Constraint(ConstraintQuery),
    Topology(Vec<TraversalQuery>),
}

fn keyed_by_drug(table: &str, drug: &EntityId) -> ConstraintQuery {
    ConstraintQuery {
        table: table.to_string(),
        predicates: vec![Predicate::new("drug", Comparison::Eq(Value::text(drug.as_str())))],
    }
}

fn drug(id: &EntityId) -> NodeSelector {
    NodeSelector { label: names::DRUG.into(), id: id.clone() }
}

fn pattern(start: &EntityId, steps: Vec<Step>, end: Option<&EntityId>) -> TraversalQuery {
    TraversalQuery {
        start: drug(start),
        steps,
        max_depth: DEFAULT_MAX_DEPTH,
        end: end.map(drug),
        returns: ReturnSpec::Paths,
    }
}

/// Compiles a task into IR. Pure: equal tasks give equal queries.
pub fn generate_query(task: &VerificationTask) -> Result<HybridQuery, QueryError> {
    use names::*;
    use crate::store::Direction::*;
    task.validate()?;
    let d = &task.drugs[0];
    Ok(match task.category {
        Category::Interaction => {
            let other = &task.drugs[1];
            HybridQuery::Topology(vec![
                pattern(d, vec![Step::new(INTERACTS_WITH, Both, DRUG)], Some(other)),
                pattern(
                    d,
                    vec![
                        Step::new(MEMBER_OF, Out, CLASS),
                        Step::new(CLASS_INTERACTS_WITH, Both, CLASS),
                        Step::new(MEMBER_OF, In, DRUG),
                    ],
                    Some(other),
                ),
            ])
        }
        Category::Allergy => HybridQuery::Topology(vec![
            pattern(d, vec![Step::new(HAS_INGREDIENT, Out, INGREDIENT)], None),
            pattern(
                d,
                vec![Step::new(HAS_INGREDIENT, Out, INGREDIENT), Step::new(BELONGS_TO, Out, CLASS)],
                None,
            ),
            pattern(d, vec![Step::new(MEMBER_OF, Out, CLASS)], None),
        ]),
        c => HybridQuery::Constraint(keyed_by_drug(c.table().expect("constraint category"), d)),
    })
}

/// Fails with `UnknownDrug` for the first subject the store has never seen.
pub fn check_subjects(store: &HybridStore, task: &VerificationTask) -> Result<(), QueryError> {
    match task.drugs.iter().find(|d| !store.knows_entity(d)) {
        Some(d) => Err(QueryError::UnknownDrug(d.clone())),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dosage_task_compiles_to_keyed_select() {
        let t = VerificationTask::new("T1", Category::Dosage, vec![EntityId::new("Metformin")]).unwrap();
        let q = generate_query(&t).unwrap();
        assert_eq!(
            q,
            HybridQuery::Constraint(ConstraintQuery {
                table: "DosageRules".into(),
                predicates: vec![Predicate::new("drug", Comparison::Eq(Value::text("metformin")))],
            })
        );
        assert_eq!(generate_query(&t).unwrap(), q);
    }

    #[test]
    fn allergy_task_walks_composition() {
        let t = VerificationTask::new("T1", Category::Allergy, vec![EntityId::new("Metformin")]).unwrap();
        let HybridQuery::Topology(qs) = generate_query(&t).unwrap() else { panic!() };
        assert_eq!(qs[1].steps[0].edge_type, names::HAS_INGREDIENT);
        assert_eq!(qs[1].steps[1].edge_type, names::BELONGS_TO);
    }

    #[test]
    fn self_interaction_is_rejected() {
        let a = EntityId::new("A");
        let err = VerificationTask::new("T", Category::Interaction, vec![a.clone(), a]).unwrap_err();
        assert!(matches!(err, QueryError::InvalidTask(_)));
        let err = VerificationTask::new("T", Category::Dosage, vec![]).unwrap_err();
        assert!(matches!(err, QueryError::InvalidTask(_)));
    }
}
