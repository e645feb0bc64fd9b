// Copyright 2026 Compulse Contributors
// SPDX-License-Identifier: Apache-2.0

//! Data-parallel fan-out with a sequential fallback.
//!
//! The heavy loops in this crate (synthesis restarts, benchmarking trials,
//! sweep points) are embarrassingly parallel: every work item derives its
//! own RNG stream from (seed, index) and results are combined in index
//! order. That makes the parallel and sequential paths bit-identical, so
//! rayon is an optional dependency behind the `parallel` feature and can
//! also be disabled at runtime (used by the benches to compare both paths
//! in one build).

use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Force the sequential path at runtime even when the `parallel` feature is
/// compiled in. Global; intended for benches and A/B debugging.
pub fn set_force_sequential(force: bool) {
    FORCE_SEQUENTIAL.store(force, Ordering::Relaxed);
}

/// True when calls to [`map_indexed`] will actually fan out.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.load(Ordering::Relaxed)
}

/// Map `f` over `0..n`, collecting results in index order.
///
/// `f` must be a pure function of its index (plus captured immutable state);
/// the output is identical whether or not the map runs in parallel.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let f = |i: usize| (i as f64).sin() * (i as f64 + 1.0).ln();
        let par = map_indexed(1000, f);
        set_force_sequential(true);
        let seq = map_indexed(1000, f);
        set_force_sequential(false);
        assert_eq!(par, seq);
    }
}
