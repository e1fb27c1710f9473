//! Execution-mode switch for the data-parallel inner loops (batch flows,
//! adversary trials, population scans). With the `parallel` feature the work
//! runs on a rayon pool; without it everything falls back to a sequential
//! loop. Results are collected in input order in both modes, so outputs are
//! identical either way.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    /// Plain sequential loop; always available.
    Sequential,
    /// Rayon worker pool. Requires the `parallel` feature; selecting it in a
    /// build without the feature falls back to sequential.
    #[default]
    Parallel,
}

impl ExecMode {
    pub fn effective_parallel(self) -> bool {
        match self {
            ExecMode::Sequential => false,
            ExecMode::Parallel => cfg!(feature = "parallel"),
        }
    }
}

/// Map `f` over `0..n`, collecting results in index order.
pub fn run_indexed<T, F>(mode: ExecMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if mode.effective_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// Map `f` over a slice, collecting results in input order.
pub fn run_over<'a, I, T, F>(mode: ExecMode, items: &'a [I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&'a I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if mode.effective_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
    }
    let _ = mode;
    items.iter().map(f).collect()
}

/// Count items of `0..n` satisfying `f`.
pub fn count_indexed<F>(mode: ExecMode, n: usize, f: F) -> usize
where
    F: Fn(usize) -> bool + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if mode.effective_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().filter(|&i| f(i)).count();
        }
    }
    let _ = mode;
    (0..n).filter(|&i| f(i)).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let seq = run_indexed(ExecMode::Sequential, 100, |i| i * i);
        let par = run_indexed(ExecMode::Parallel, 100, |i| i * i);
        assert_eq!(seq, par);
        assert_eq!(
            count_indexed(ExecMode::Sequential, 100, |i| i % 3 == 0),
            count_indexed(ExecMode::Parallel, 100, |i| i % 3 == 0)
        );
    }

    #[test]
    fn order_preserved_in_parallel() {
        let out = run_indexed(ExecMode::Parallel, 1000, |i| i);
        assert!(out.windows(2).all(|w| w[0] + 1 == w[1]));
    }
}
