//! Operation-count scaling of indexed range queries and graph hops.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::query::{execute_constraint, execute_traversal, Comparison, ConstraintQuery, NodeSelector, Predicate, ReturnSpec, Step, TraversalQuery};
use crate::schema::{names, standard_schema};
use crate::store::{instrument, Direction, EntityId, HybridStore, Provenance};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationalPoint {
    pub rows: usize,
    pub queries: usize,
    pub mean_comparisons: f64,
    /// `mean_comparisons / log2(rows)`.
    pub per_log2n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphPoint {
    pub vertices: usize,
    pub edges: usize,
    pub hops: usize,
    pub mean_ops_per_hop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub relational: Vec<RelationalPoint>,
    /// Fitted once at the smallest size with a factor-2 allowance.
    pub fitted_c: f64,
    pub log_bound_holds: bool,
    pub graph: Vec<GraphPoint>,
    /// Largest over smallest mean per-hop count.
    pub hop_ratio: f64,
    pub hop_bound_holds: bool,
}

pub const HOP_RATIO_BOUND: f64 = 1.1;
const OUT_DEGREE: usize = 4;

fn prov(i: usize) -> Provenance {
    Provenance::new("bench", "bench", &format!("fact {i}"))
}

/// A store with `n` dose rows whose `max_daily_dose` is `0..n`.
pub fn dosage_store(n: usize) -> HybridStore {
    let mut s = HybridStore::new(standard_schema());
    s.register_document("bench", "bench").expect("fresh store");
    for i in 0..n {
        let values = BTreeMap::from([
            ("drug".to_string(), Value::text(format!("drug{}", i % 97))),
            ("max_daily_dose".to_string(), Value::Number(i as f64)),
        ]);
        s.insert_relational(names::DOSAGE, values, prov(i)).expect("valid row");
    }
    s
}

/// A random digraph with `v` drug vertices of out-degree four.
pub fn interaction_graph(seed: u64, v: usize) -> HybridStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = HybridStore::new(standard_schema());
    s.register_document("bench", "bench").expect("fresh store");
    let ids: Vec<EntityId> = (0..v).map(|i| EntityId::raw(format!("v{i}"))).collect();
    for (i, src) in ids.iter().enumerate() {
        for k in 0..OUT_DEGREE {
            let mut j = rng.gen_range(0..v - 1);
            if j >= i {
                j += 1;
            }
            s.insert_edge(src, names::INTERACTS_WITH, &ids[j], BTreeMap::new(), prov(i * OUT_DEGREE + k))
                .expect("valid edge");
        }
    }
    s
}

pub fn measure_range_queries(store: &HybridStore, n: usize, queries: usize, seed: u64) -> RelationalPoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0u64;
    for _ in 0..queries {
        let x = Value::Number(rng.gen_range(0..n) as f64);
        let q = ConstraintQuery {
            table: names::DOSAGE.into(),
            predicates: vec![
                Predicate::new("max_daily_dose", Comparison::Ge(x.clone())),
                Predicate::new("max_daily_dose", Comparison::Le(x)),
            ],
        };
        let (hits, cmp, _) = instrument::measure(|| execute_constraint(store, &q).expect("valid query"));
        debug_assert_eq!(hits.len(), 1);
        total += cmp;
    }
    let mean = total as f64 / queries as f64;
    RelationalPoint { rows: n, queries, mean_comparisons: mean, per_log2n: mean / (n as f64).log2() }
}

pub fn measure_hops(store: &HybridStore, v: usize, hops: usize, seed: u64) -> GraphPoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0u64;
    for _ in 0..hops {
        let q = TraversalQuery {
            start: NodeSelector { label: names::DRUG.into(), id: EntityId::raw(format!("v{}", rng.gen_range(0..v))) },
            steps: vec![Step::new(names::INTERACTS_WITH, Direction::Out, names::DRUG)],
            max_depth: 1,
            end: None,
            returns: ReturnSpec::Paths,
        };
        let (paths, _, ops) = instrument::measure(|| execute_traversal(store, &q).expect("valid pattern"));
        debug_assert_eq!(paths.len(), OUT_DEGREE);
        total += ops;
    }
    GraphPoint {
        vertices: v,
        edges: store.graph().edge_count(),
        hops,
        mean_ops_per_hop: total as f64 / hops as f64,
    }
}

/// Measures every size and checks both growth bounds.
pub fn bench_scaling(seed: u64, row_sizes: &[usize], vertex_sizes: &[usize], samples: usize) -> ScalingReport {
    let relational: Vec<RelationalPoint> =
        row_sizes.iter().map(|&n| measure_range_queries(&dosage_store(n), n, samples, seed)).collect();
    let fitted_c = relational.first().map_or(0.0, |p| 2.0 * p.per_log2n);
    let log_bound_holds = relational.iter().all(|p| p.mean_comparisons <= fitted_c * (p.rows as f64).log2());
    let graph: Vec<GraphPoint> = vertex_sizes
        .iter()
        .map(|&v| measure_hops(&interaction_graph(seed, v), v, samples, seed))
        .collect();
    let means = graph.iter().map(|g| g.mean_ops_per_hop);
    let (lo, hi) = means.fold((f64::INFINITY, 0.0f64), |(lo, hi), m| (lo.min(m), hi.max(m)));
    let hop_ratio = if graph.is_empty() { 1.0 } else { hi / lo };
    ScalingReport { relational, fitted_c, log_bound_holds, graph, hop_ratio, hop_bound_holds: hop_ratio <= HOP_RATIO_BOUND }
}
