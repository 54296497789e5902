//! Execution policy for the path-parallel loops.
//!
//! All parallel work in the crate is expressed through the helpers in this
//! module. Each work item writes only its own output slot and every reduction
//! happens afterwards in index order, so results are bitwise identical for
//! any thread count and for the sequential fallback.
//!
//! With the `parallel` feature disabled, [`Execution::Parallel`] silently runs
//! sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Applies `f` to consecutive `chunk`-sized mutable slices of `data`.
    /// The closure receives the chunk index.
    pub fn for_each_chunk_mut<T, F>(self, data: &mut [T], chunk: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        assert!(chunk > 0, "chunk size must be positive");
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            data.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }

    /// Fallible variant of [`for_each_chunk_mut`](Self::for_each_chunk_mut);
    /// reports the error of the lowest failing chunk.
    pub fn try_for_each_chunk_mut<T, E, F>(self, data: &mut [T], chunk: usize, f: F) -> Result<(), E>
    where
        T: Send,
        E: Send,
        F: Fn(usize, &mut [T]) -> Result<(), E> + Sync + Send,
    {
        assert!(chunk > 0, "chunk size must be positive");
        let results: Vec<Result<(), E>> = {
            #[cfg(feature = "parallel")]
            {
                if self.is_parallel() {
                    data.par_chunks_mut(chunk)
                        .enumerate()
                        .map(|(i, c)| f(i, c))
                        .collect()
                } else {
                    data.chunks_mut(chunk).enumerate().map(|(i, c)| f(i, c)).collect()
                }
            }
            #[cfg(not(feature = "parallel"))]
            {
                data.chunks_mut(chunk).enumerate().map(|(i, c)| f(i, c)).collect()
            }
        };
        results.into_iter().collect()
    }

    /// Like [`try_for_each_chunk_mut`](Self::try_for_each_chunk_mut) but
    /// collects one value per chunk, in chunk order.
    pub fn try_map_chunks_mut<T, R, E, F>(self, data: &mut [T], chunk: usize, f: F) -> Result<Vec<R>, E>
    where
        T: Send,
        R: Send,
        E: Send,
        F: Fn(usize, &mut [T]) -> Result<R, E> + Sync + Send,
    {
        assert!(chunk > 0, "chunk size must be positive");
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            let results: Vec<Result<R, E>> = data.par_chunks_mut(chunk).enumerate().map(|(i, c)| f(i, c)).collect();
            return results.into_iter().collect();
        }
        data.chunks_mut(chunk).enumerate().map(|(i, c)| f(i, c)).collect()
    }

    /// Maps `0..n` through `f`, preserving order.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }
}

/// Sums in index order. Kept as a named helper so reductions never go through
/// an order-dependent parallel sum.
pub fn ordered_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().fold(0.0, |acc, v| acc + v)
}
