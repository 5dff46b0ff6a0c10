use serde::{Deserialize, Serialize};

use super::{QueryError, ReturnSpec, TraversalQuery};
use crate::store::{EdgeId, EntityId, GraphComponent, HybridStore};

/// A matched path: `nodes.len() == edges.len() + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Path {
    pub nodes: Vec<EntityId>,
    pub edges: Vec<EdgeId>,
}

impl Path {
    pub fn end(&self) -> &EntityId {
        self.nodes.last().expect("paths are never empty")
    }
}

fn validate(store: &HybridStore, q: &TraversalQuery) -> Result<(), QueryError> {
    let schema = store.schema();
    if q.steps.is_empty() {
        return Err(QueryError::InvalidPattern("empty pattern".into()));
    }
    if q.max_depth < q.steps.len() {
        return Err(QueryError::InvalidPattern(format!(
            "pattern of {} steps exceeds max_depth {}",
            q.steps.len(),
            q.max_depth
        )));
    }
    let labels = std::iter::once(&q.start.label)
        .chain(q.steps.iter().map(|s| &s.target_label))
        .chain(q.end.iter().map(|e| &e.label));
    for l in labels {
        if !schema.node_labels.contains(l) {
            return Err(QueryError::UnknownLabel(l.clone()));
        }
    }
    for s in &q.steps {
        if schema.edge_type(&s.edge_type).is_none() {
            return Err(QueryError::UnknownEdgeType(s.edge_type.clone()));
        }
    }
    Ok(())
}

struct Walk<'a> {
    g: &'a GraphComponent,
    q: &'a TraversalQuery,
    nodes: Vec<u32>,
    edges: Vec<u32>,
    out: Vec<Path>,
}

impl Walk<'_> {
    fn step(&mut self) {
        let depth = self.edges.len();
        let at = *self.nodes.last().expect("walk starts at a vertex");
        if depth == self.q.steps.len() {
            let end_ok = self.q.end.as_ref().is_none_or(|e| self.g.vertices()[at as usize].id == e.id);
            if end_ok {
                self.out.push(Path {
                    nodes: self.nodes.iter().map(|&v| self.g.vertices()[v as usize].id.clone()).collect(),
                    edges: self.edges.iter().map(|&e| self.g.edges()[e as usize].id).collect(),
                });
            }
            return;
        }
        let s = &self.q.steps[depth];
        let entries: Vec<_> = self.g.neighbors(at, &s.edge_type, s.dir).collect();
        for a in entries {
            if self.nodes.contains(&a.neighbor) {
                continue;
            }
            if self.g.vertices()[a.neighbor as usize].label != s.target_label {
                continue;
            }
            self.nodes.push(a.neighbor);
            self.edges.push(a.edge);
            self.step();
            self.nodes.pop();
            self.edges.pop();
        }
    }
}

/// All simple paths matching the full pattern from the start vertex, in
/// depth-first order with neighbors visited by (entity id, edge id).
/// With `ReturnSpec::Nodes` only the first path to each distinct end vertex
/// is kept.
pub fn execute_traversal(store: &HybridStore, q: &TraversalQuery) -> Result<Vec<Path>, QueryError> {
    validate(store, q)?;
    let g = store.graph();
    let Some(start) = g.vertex_index(&q.start.id) else {
        return Ok(Vec::new());
    };
    if g.vertices()[start as usize].label != q.start.label {
        return Ok(Vec::new());
    }
    let mut walk = Walk { g, q, nodes: vec![start], edges: Vec::new(), out: Vec::new() };
    walk.step();
    let mut out = walk.out;
    if q.returns == ReturnSpec::Nodes {
        let mut seen = std::collections::BTreeSet::new();
        out.retain(|p| seen.insert(p.end().clone()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::query::{NodeSelector, Step};
    use crate::schema::{EdgeTypeDef, HybridSchema, SchemaChange};
    use crate::store::{Direction, Provenance};

    /// Patient -has-> Allergy <-subclass_of- Concept <-ingredient_of- Drug
    #[test]
    fn allergy_lineage_three_hops() {
        let mut schema = HybridSchema::empty();
        let mut changes: Vec<SchemaChange> = ["Patient", "Allergy", "Concept", "Drug"]
            .iter()
            .map(|l| SchemaChange::AddLabel { label: l.to_string() })
            .collect();
        changes.extend([
            SchemaChange::AddEdgeType { edge_type: EdgeTypeDef::new("has", "Patient", "Allergy") },
            SchemaChange::AddEdgeType { edge_type: EdgeTypeDef::new("subclass_of", "Concept", "Allergy") },
            SchemaChange::AddEdgeType { edge_type: EdgeTypeDef::new("ingredient_of", "Drug", "Concept") },
        ]);
        schema = schema.apply(&changes).unwrap();
        let mut s = HybridStore::new(schema);
        s.register_document("d", "").unwrap();
        let p = |t: &str| Provenance::new("d", "s", t);
        let id = EntityId::new;
        s.insert_edge(&id("patient-1"), "has", &id("penicillin allergy"), BTreeMap::new(), p("a")).unwrap();
        s.insert_edge(&id("beta-lactam"), "subclass_of", &id("penicillin allergy"), BTreeMap::new(), p("b")).unwrap();
        s.insert_edge(&id("amoxicillin"), "ingredient_of", &id("beta-lactam"), BTreeMap::new(), p("c")).unwrap();
        s.seal().unwrap();
        let q = TraversalQuery {
            start: NodeSelector { label: "Patient".into(), id: id("patient-1") },
            steps: vec![
                Step::new("has", Direction::Out, "Allergy"),
                Step::new("subclass_of", Direction::In, "Concept"),
                Step::new("ingredient_of", Direction::In, "Drug"),
            ],
            max_depth: 3,
            end: None,
            returns: ReturnSpec::Paths,
        };
        let paths = execute_traversal(&s, &q).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(
            paths[0].nodes,
            vec![id("patient-1"), id("penicillin allergy"), id("beta-lactam"), id("amoxicillin")]
        );
        let mut absent = q.clone();
        absent.start.id = id("patient-2");
        assert!(execute_traversal(&s, &absent).unwrap().is_empty());
        let mut bad = q;
        bad.steps[0].edge_type = "nope".into();
        assert_eq!(execute_traversal(&s, &bad), Err(QueryError::UnknownEdgeType("nope".into())));
    }
}
