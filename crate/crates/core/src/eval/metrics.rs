use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ingest::FactMultiset;

/// Exact-match confusion counts with derived ratios. A ratio whose
/// denominator is zero is undefined and reported as `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsResult {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Harmonic mean of precision and recall; undefined when both are zero.
pub fn f1_from(precision: f64, recall: f64) -> Option<f64> {
    let s = precision + recall;
    (s > 0.0).then(|| 2.0 * precision * recall / s)
}

impl MetricsResult {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) => f1_from(p, r),
            _ => None,
        };
        MetricsResult { tp, fp, fn_, precision, recall, f1 }
    }

    pub fn is_perfect(&self) -> bool {
        self.fp == 0 && self.fn_ == 0 && self.tp > 0
    }
}

/// Multiset exact-match scoring of predicted against gold items.
pub fn score<T: Ord>(predicted: impl IntoIterator<Item = T>, gold: impl IntoIterator<Item = T>) -> MetricsResult {
    let mut counts: BTreeMap<T, (usize, usize)> = BTreeMap::new();
    for p in predicted {
        counts.entry(p).or_default().0 += 1;
    }
    for g in gold {
        counts.entry(g).or_default().1 += 1;
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, g) in counts.into_values() {
        let m = p.min(g);
        tp += m;
        fp += p - m;
        fn_ += g - m;
    }
    MetricsResult::from_counts(tp, fp, fn_)
}

pub fn score_facts(predicted: &FactMultiset, gold: &FactMultiset) -> MetricsResult {
    let tp = predicted.overlap(gold);
    MetricsResult::from_counts(tp, predicted.len() - tp, gold.len() - tp)
}

/// Pools the counts of every component before taking ratios.
pub fn micro_average(parts: &[MetricsResult]) -> MetricsResult {
    let (tp, fp, fn_) = parts.iter().fold((0, 0, 0), |(a, b, c), m| (a + m.tp, b + m.fp, c + m.fn_));
    MetricsResult::from_counts(tp, fp, fn_)
}
