//! Thread-local operation counters for the complexity contracts.
//!
//! Index key comparisons and adjacency work are counted on the calling
//! thread, so concurrent readers never contend and measurements made on one
//! thread are not polluted by another.

use std::cell::Cell;

thread_local! {
    static KEY_COMPARISONS: Cell<u64> = const { Cell::new(0) };
    static ADJACENCY_OPS: Cell<u64> = const { Cell::new(0) };
}

#[inline]
pub(crate) fn count_comparison() {
    KEY_COMPARISONS.with(|c| c.set(c.get() + 1));
}

#[inline]
pub(crate) fn count_adjacency(n: u64) {
    ADJACENCY_OPS.with(|c| c.set(c.get() + n));
}

pub fn reset() {
    KEY_COMPARISONS.with(|c| c.set(0));
    ADJACENCY_OPS.with(|c| c.set(0));
}

pub fn key_comparisons() -> u64 {
    KEY_COMPARISONS.with(Cell::get)
}

pub fn adjacency_ops() -> u64 {
    ADJACENCY_OPS.with(Cell::get)
}

/// Runs `f` and returns its result with the (comparisons, adjacency ops) it incurred.
pub fn measure<T>(f: impl FnOnce() -> T) -> (T, u64, u64) {
    let c0 = key_comparisons();
    let a0 = adjacency_ops();
    let out = f();
    (out, key_comparisons() - c0, adjacency_ops() - a0)
}
