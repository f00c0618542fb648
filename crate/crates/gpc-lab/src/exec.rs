//! Data-parallel helpers with a sequential fallback.
//!
//! With the default `parallel` feature the mapping functions fan out over
//! rayon's global pool; without it they degrade to plain iterators with
//! identical output order. The `_seq` variants are always sequential so
//! benchmarks can compare both paths in one build.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, preserving order.
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Sequential counterpart of [`map_slice`].
pub fn map_slice_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Maps an index range, preserving order.
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential counterpart of [`map_range`].
pub fn map_range_seq<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Whether the parallel path is compiled in.
pub const fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let items: Vec<u64> = (0..257).collect();
        let f = |x: &u64| x * x + 1;
        assert_eq!(map_slice(&items, f), map_slice_seq(&items, f));
        let g = |i: usize| (i as u64).wrapping_mul(2654435761);
        assert_eq!(map_range(257, g), map_range_seq(257, g));
    }
}
