//! Replica-parallel helpers. Work is split into a fixed number of units
//! independent of the thread count and results are returned in unit order,
//! so every reduction is deterministic.

use rayon::prelude::*;

use crate::error::Result;

pub fn map_replicas<T: Send>(count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..count).into_par_iter().map(f).collect()
}

pub fn try_map_replicas<T: Send>(
    count: usize,
    f: impl Fn(usize) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    (0..count).into_par_iter().map(f).collect()
}

/// Splits `total` samples into blocks of at most `block` (block `b` gets its own stream).
pub fn blocks(total: usize, block: usize) -> Vec<(usize, usize)> {
    let block = block.max(1);
    (0..total.div_ceil(block))
        .map(|b| (b, block.min(total - b * block)))
        .collect()
}

/// Configures the global pool once; later calls are ignored.
pub fn init_threads(threads: usize) {
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_cover_total() {
        let b = blocks(10, 4);
        assert_eq!(b, vec![(0, 4), (1, 4), (2, 2)]);
        assert_eq!(blocks(8, 4).len(), 2);
    }
}
