//! Switch between sequential and data-parallel scans.
//!
//! Every search in this crate enumerates a candidate space in a fixed
//! canonical order and must return the first hit in that order, so the
//! parallel path uses order-respecting reductions only.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Execution strategy for candidate scans.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

/// Cooperative cancellation for long searches: callers keep a clone and
/// flip it from another thread; searches poll it at checkpoint boundaries
/// and return their partial result.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        CancelToken::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::Relaxed);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::Relaxed)
    }
}

impl Default for ExecMode {
    #[cfg(feature = "parallel")]
    fn default() -> Self {
        ExecMode::Parallel
    }
    #[cfg(not(feature = "parallel"))]
    fn default() -> Self {
        ExecMode::Sequential
    }
}

// Below this many items per split, parallel dispatch overhead beats the
// work itself on the fine-grained scans in this crate.
#[cfg(feature = "parallel")]
const MIN_SPLIT: usize = 512;

/// Applies `f` to `0..n` and returns the first `Some` in index order.
pub fn find_first_map<R, F>(n: usize, mode: ExecMode, f: F) -> Option<R>
where
    R: Send,
    F: Fn(usize) -> Option<R> + Sync + Send,
{
    match mode {
        ExecMode::Sequential => (0..n).find_map(f),
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => (0..n)
            .into_par_iter()
            .with_min_len(MIN_SPLIT)
            .find_map_first(f),
    }
}

/// Applies `f` to `0..n` and collects the results in index order. Splits
/// are sized so every worker gets a fair share without over-splitting.
pub fn map_collect<R, F>(n: usize, mode: ExecMode, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match mode {
        ExecMode::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            let shares = rayon::current_num_threads().max(1) * 2;
            (0..n)
                .into_par_iter()
                .with_min_len(n / shares + 1)
                .map(f)
                .collect()
        }
    }
}
