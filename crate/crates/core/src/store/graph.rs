use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::instrument;
use super::{EntityId, Provenance, Result, StoreError};
use crate::schema::{EdgeTypeDef, HybridSchema};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u64);

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Out,
    In,
    Both,
}

impl Direction {
    fn admits(self, entry: Direction) -> bool {
        self == Direction::Both || self == entry
    }
}

/// One slot in a vertex's adjacency list: a direct reference to the edge and
/// to the vertex on the other side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdjEntry {
    pub edge: u32,
    pub neighbor: u32,
    pub dir: Direction,
}

#[derive(Debug, Clone)]
pub struct Vertex {
    pub id: EntityId,
    pub label: String,
    pub props: BTreeMap<String, Value>,
    /// Indexed by edge-type slot; each list sorted by (neighbor id, edge id).
    adjacency: Vec<Vec<AdjEntry>>,
}

#[derive(Debug, Clone)]
pub struct Edge {
    pub id: EdgeId,
    pub src: u32,
    pub dst: u32,
    pub edge_type: String,
    pub props: BTreeMap<String, Value>,
    pub prov: Provenance,
}

#[derive(Debug, Clone)]
pub struct GraphComponent {
    vertices: Vec<Vertex>,
    by_id: HashMap<EntityId, u32>,
    edges: Vec<Edge>,
    type_slots: HashMap<String, usize>,
    edge_type_defs: BTreeMap<String, EdgeTypeDef>,
}

impl GraphComponent {
    pub(crate) fn new(schema: &HybridSchema) -> Self {
        let type_slots =
            schema.edge_types.keys().enumerate().map(|(i, name)| (name.clone(), i)).collect();
        GraphComponent {
            vertices: Vec::new(),
            by_id: HashMap::new(),
            edges: Vec::new(),
            type_slots,
            edge_type_defs: schema.edge_types.clone(),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_index(&self, id: &EntityId) -> Option<u32> {
        self.by_id.get(id).copied()
    }

    pub fn vertex(&self, idx: u32) -> Option<&Vertex> {
        self.vertices.get(idx as usize)
    }

    pub fn vertex_by_id(&self, id: &EntityId) -> Option<&Vertex> {
        self.vertex_index(id).and_then(|i| self.vertex(i))
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, idx: u32) -> Option<&Edge> {
        self.edges.get(idx as usize)
    }

    pub fn edge_by_id(&self, id: EdgeId) -> Option<&Edge> {
        let idx = usize::try_from(id.0).ok()?.checked_sub(1)?;
        self.edges.get(idx)
    }

    pub fn edge_type_def(&self, name: &str) -> Option<&EdgeTypeDef> {
        self.edge_type_defs.get(name)
    }

    /// Adjacency entries of `vertex` for one edge type and direction.
    ///
    /// The bucket is reached by direct slot index, so the work is independent
    /// of graph size; each returned entry is counted as one adjacency op.
    pub fn neighbors(
        &self,
        vertex: u32,
        edge_type: &str,
        dir: Direction,
    ) -> impl Iterator<Item = AdjEntry> + '_ {
        instrument::count_adjacency(1);
        let bucket: &[AdjEntry] = match (self.type_slots.get(edge_type), self.vertex(vertex)) {
            (Some(&slot), Some(v)) => v.adjacency.get(slot).map_or(&[], Vec::as_slice),
            _ => &[],
        };
        bucket.iter().copied().filter(move |e| {
            instrument::count_adjacency(1);
            dir.admits(e.dir)
        })
    }

    /// Neighbor entity ids across all edge types, both directions.
    pub fn neighbor_ids(&self, id: &EntityId) -> Vec<EntityId> {
        let Some(v) = self.vertex_by_id(id) else { return Vec::new() };
        let mut out: Vec<EntityId> = v
            .adjacency
            .iter()
            .flatten()
            .map(|a| self.vertices[a.neighbor as usize].id.clone())
            .collect();
        out.sort();
        out.dedup();
        out
    }

    pub(crate) fn ensure_vertex(
        &mut self,
        id: &EntityId,
        label: &str,
        props: Option<BTreeMap<String, Value>>,
    ) -> Result<u32> {
        if let Some(&idx) = self.by_id.get(id) {
            let v = &mut self.vertices[idx as usize];
            if v.label != label {
                return Err(StoreError::LabelMismatch {
                    id: id.to_string(),
                    expected: label.to_string(),
                    found: v.label.clone(),
                });
            }
            if let Some(p) = props {
                v.props.extend(p);
            }
            return Ok(idx);
        }
        let idx = u32::try_from(self.vertices.len())
            .map_err(|_| StoreError::Format("vertex capacity exceeded".into()))?;
        self.vertices.push(Vertex {
            id: id.clone(),
            label: label.to_string(),
            props: props.unwrap_or_default(),
            adjacency: vec![Vec::new(); self.type_slots.len()],
        });
        self.by_id.insert(id.clone(), idx);
        Ok(idx)
    }

    fn attach(&mut self, at: u32, slot: usize, entry: AdjEntry) {
        let neighbor_id = self.vertices[entry.neighbor as usize].id.clone();
        let edge_id = self.edges[entry.edge as usize].id;
        let key = (&neighbor_id, edge_id);
        let vertices = &self.vertices;
        let edges = &self.edges;
        let list = &vertices[at as usize].adjacency[slot];
        let pos = list.partition_point(|a| {
            (&vertices[a.neighbor as usize].id, edges[a.edge as usize].id) <= key
        });
        self.vertices[at as usize].adjacency[slot].insert(pos, entry);
    }

    pub(crate) fn insert_edge(
        &mut self,
        src: &EntityId,
        def: &EdgeTypeDef,
        dst: &EntityId,
        props: BTreeMap<String, Value>,
        prov: Provenance,
    ) -> Result<EdgeId> {
        let slot = *self
            .type_slots
            .get(&def.name)
            .ok_or_else(|| StoreError::UnknownEdgeType(def.name.clone()))?;
        let s = self.ensure_vertex(src, &def.src_label, None)?;
        let d = self.ensure_vertex(dst, &def.dst_label, None)?;
        let id = EdgeId(self.edges.len() as u64 + 1);
        let idx = u32::try_from(self.edges.len())
            .map_err(|_| StoreError::Format("edge capacity exceeded".into()))?;
        self.edges.push(Edge { id, src: s, dst: d, edge_type: def.name.clone(), props, prov });
        self.attach(s, slot, AdjEntry { edge: idx, neighbor: d, dir: Direction::Out });
        if s != d {
            self.attach(d, slot, AdjEntry { edge: idx, neighbor: s, dir: Direction::In });
        }
        Ok(id)
    }
}
