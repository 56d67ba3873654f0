//! Sequential / data-parallel execution switch.
//!
//! Every parallel loop in the crate goes through [`map_indexed`], which
//! computes each element independently and collects in index order. Output
//! is therefore bit-identical for any thread count. Without the `parallel`
//! feature, [`Parallelism::Rayon`] falls back to the sequential path.

/// Execution mode for data-parallel loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    /// Single-threaded, in index order.
    #[default]
    Sequential,
    /// Work-stealing over the current rayon pool.
    Rayon,
}

impl Parallelism {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Rayon
    }
}

/// Evaluate `f(0..n)` and collect the results in index order.
pub fn map_indexed<T, F>(par: Parallelism, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if par == Parallelism::Rayon {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = par;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        let a = map_indexed(Parallelism::Sequential, 1000, f);
        let b = map_indexed(Parallelism::Rayon, 1000, f);
        assert_eq!(a, b);
    }
}
