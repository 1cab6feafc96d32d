//! Data-parallel map over independent jobs with a sequential fallback.

use serde::{Deserialize, Serialize};

/// How independent jobs are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Execution {
    Sequential,
    /// Bounded worker pool; `None` uses the number of available cores.
    /// Without the `parallel` feature this runs sequentially.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Default upper bound on worker threads.
pub const MAX_WORKERS: usize = 16;

fn worker_count(threads: Option<usize>) -> usize {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    threads.unwrap_or(cores).clamp(1, MAX_WORKERS)
}

/// Applies `f` to every item, preserving order.
pub fn map<T, U, F>(exec: Execution, threads: Option<usize>, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    match exec {
        Execution::Sequential => items.iter().map(f).collect(),
        Execution::Parallel => parallel_map(worker_count(threads), items, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, U, F>(workers: usize, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, U, F>(_workers: usize, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let items: Vec<u64> = (0..257).collect();
        let seq = map(Execution::Sequential, None, &items, |x| x * x);
        let par = map(Execution::Parallel, Some(4), &items, |x| x * x);
        assert_eq!(seq, par);
        assert_eq!(par[256], 256 * 256);
    }

    #[test]
    fn empty_input() {
        let items: Vec<u8> = Vec::new();
        assert!(map(Execution::Parallel, None, &items, |x| *x).is_empty());
    }
}
