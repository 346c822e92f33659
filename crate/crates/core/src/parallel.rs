//! Deterministic parallel reductions.
//!
//! Work is split into chunks of a fixed size that does not depend on the
//! number of worker threads. Each chunk is folded sequentially and the chunk
//! results are combined in index order, so the floating-point result is the
//! same for any pool size.

use rayon::prelude::*;

pub(crate) const CHUNK: usize = 64;

/// Folds `0..len` in fixed chunks and merges the partial states in order.
pub(crate) fn ordered_fold<S, F, M>(len: usize, init: impl Fn() -> S + Sync, fold: F, merge: M) -> S
where
    S: Send,
    F: Fn(&mut S, usize) + Sync,
    M: Fn(&mut S, S),
{
    let chunks = len.div_ceil(CHUNK);
    let partials: Vec<S> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut state = init();
            let end = ((c + 1) * CHUNK).min(len);
            for i in c * CHUNK..end {
                fold(&mut state, i);
            }
            state
        })
        .collect();
    let mut acc = init();
    for p in partials {
        merge(&mut acc, p);
    }
    acc
}
