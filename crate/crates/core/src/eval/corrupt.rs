//! Seeded corruption of extracted records between extraction and
//! persistence, with a log from which the expected scores follow exactly.

use std::cell::RefCell;
use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::metrics::MetricsResult;
use crate::ingest::{ExtractionRecord, RecordTarget};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    /// The subject or object entity is renamed; the fact lands in the store
    /// under the wrong entity.
    EntitySwap,
    /// The provenance quote no longer occurs in the source; the record is
    /// quarantined.
    BrokenProvenance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Injection {
    pub doc_index: usize,
    pub record_index: usize,
    pub kind: CorruptionKind,
    pub source_text: String,
}

/// Which records to corrupt, chosen up front from per-document counts.
#[derive(Debug, Clone)]
pub struct CorruptionPlan {
    targets: BTreeMap<usize, Vec<(usize, CorruptionKind)>>,
    log: RefCell<Vec<Injection>>,
}

pub const CORRUPTED_SUFFIX: &str = "-corrupted";

impl CorruptionPlan {
    /// Picks `round(fraction * total)` records uniformly, alternating the
    /// two corruption kinds.
    pub fn new(seed: u64, records_per_doc: &[usize], fraction: f64) -> Self {
        let total: usize = records_per_doc.iter().sum();
        let k = ((fraction * total as f64).round() as usize).min(total);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picks: Vec<usize> = sample(&mut rng, total, k).into_vec();
        picks.sort_unstable();
        let mut targets: BTreeMap<usize, Vec<(usize, CorruptionKind)>> = BTreeMap::new();
        let (mut doc, mut base) = (0, 0);
        for (n, flat) in picks.into_iter().enumerate() {
            while flat >= base + records_per_doc[doc] {
                base += records_per_doc[doc];
                doc += 1;
            }
            let kind = if n % 2 == 0 { CorruptionKind::EntitySwap } else { CorruptionKind::BrokenProvenance };
            targets.entry(doc).or_default().push((flat - base, kind));
        }
        CorruptionPlan { targets, log: RefCell::new(Vec::new()) }
    }

    pub fn planned(&self) -> usize {
        self.targets.values().map(Vec::len).sum()
    }

    /// Tamper hook for the build: rewrites the planned records of one document.
    pub fn apply(&self, doc_index: usize, records: &mut Vec<ExtractionRecord>) {
        let Some(targets) = self.targets.get(&doc_index) else { return };
        for &(i, kind) in targets {
            let Some(r) = records.get_mut(i) else { continue };
            let source_text = r.prov.source_text.clone();
            match kind {
                CorruptionKind::EntitySwap => match &mut r.target {
                    RecordTarget::Relational { values, .. } => {
                        if let Some(Value::Text(d)) = values.get_mut("drug") {
                            d.push_str(CORRUPTED_SUFFIX);
                        }
                    }
                    RecordTarget::Graph { dst, .. } => dst.name.push_str(CORRUPTED_SUFFIX),
                },
                CorruptionKind::BrokenProvenance => r.prov.source_text.push_str(" [altered]"),
            }
            self.log.borrow_mut().push(Injection { doc_index, record_index: i, kind, source_text });
        }
    }

    pub fn log(&self) -> Vec<Injection> {
        self.log.borrow().clone()
    }
}

/// Scores implied by an injection log against `gold_total` facts: every
/// corrupted record is a miss, and every entity swap is also a spurious fact.
pub fn expected_metrics(gold_total: usize, log: &[Injection]) -> MetricsResult {
    let swaps = log.iter().filter(|i| i.kind == CorruptionKind::EntitySwap).count();
    let tp = gold_total - log.len();
    MetricsResult::from_counts(tp, swaps, log.len())
}
