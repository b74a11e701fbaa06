//! Execution policy for the data-parallel loops (frames, draws, depths, views).
//!
//! Every parallel path reduces in a fixed order so results are bit-identical to
//! the sequential path regardless of thread count. Without the `parallel`
//! feature, [`Execution::Parallel`] silently runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of work items summed sequentially inside one parallel task.
const REDUCE_CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Maps `f` over `0..n`, returning results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Maps `f` over `0..n` and folds the results with `add` in index order.
    ///
    /// Items are grouped into fixed-size chunks; each chunk is folded
    /// sequentially and the chunk totals are folded left to right, so the
    /// association is independent of the schedule.
    pub fn map_reduce<T, F, A>(self, n: usize, f: F, add: A) -> Option<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
        A: Fn(T, T) -> T + Sync + Send,
    {
        let n_chunks = n.div_ceil(REDUCE_CHUNK);
        let partials = self.map(n_chunks, |c| {
            let lo = c * REDUCE_CHUNK;
            let hi = (lo + REDUCE_CHUNK).min(n);
            (lo..hi).map(&f).reduce(&add)
        });
        partials.into_iter().flatten().reduce(add)
    }
}
