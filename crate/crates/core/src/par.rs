//! Execution mode for data-parallel sweeps.
//!
//! With the `parallel` feature (the default) [`Execution::Parallel`] runs on
//! the rayon global pool. Without it both modes run on the calling thread,
//! so results never depend on the mode.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// `Parallel` when the crate was built with rayon, else `Sequential`.
    pub fn available() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Order-preserving map.
    pub fn map<T, R, F>(self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            return items.into_par_iter().map(f).collect();
        }
        items.into_iter().map(f).collect()
    }

    /// Runs `f(0..count)` and returns the outcomes up to and including the
    /// first one accepted by `done`. The parallel mode evaluates a whole
    /// batch, then truncates, so both modes return the same prefix.
    pub fn until_first<R, F, P>(self, count: usize, f: F, done: P) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
        P: Fn(&R) -> bool,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            let mut all: Vec<R> = (0..count).into_par_iter().map(&f).collect();
            if let Some(k) = all.iter().position(&done) {
                all.truncate(k + 1);
            }
            return all;
        }
        let mut out = Vec::new();
        for i in 0..count {
            let r = f(i);
            let stop = done(&r);
            out.push(r);
            if stop {
                break;
            }
        }
        out
    }
}

/// Sizes the global rayon pool. Has no effect without the `parallel` feature
/// or when the pool was already initialised.
pub fn configure_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let items: Vec<u64> = (0..1000).collect();
        let a = Execution::Sequential.map(items.clone(), |x| x * x);
        let b = Execution::Parallel.map(items, |x| x * x);
        assert_eq!(a, b);
    }

    #[test]
    fn until_first_truncates_identically() {
        let f = |i: usize| i * 3;
        let a = Execution::Sequential.until_first(20, f, |v| *v >= 21);
        let b = Execution::Parallel.until_first(20, f, |v| *v >= 21);
        assert_eq!(a, vec![0, 3, 6, 9, 12, 15, 18, 21]);
        assert_eq!(a, b);
        assert_eq!(Execution::Parallel.until_first(4, f, |_| false).len(), 4);
    }
}
