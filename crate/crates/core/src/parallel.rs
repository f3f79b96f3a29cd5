//! Trial dispatch. With the `parallel` feature, independent items are spread
//! over a rayon pool; results always come back in input order, so output is
//! identical to the sequential path.

/// Environment variable capping the worker pool size.
pub const WORKERS_ENV: &str = "CONSIM_WORKERS";

/// Maps `f` over `items`, preserving order.
#[cfg(feature = "parallel")]
pub fn map_ordered<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_ordered<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.iter().map(f).collect()
}

/// Runs trials `0..count`, in parallel when enabled, in trial order.
#[cfg(feature = "parallel")]
pub fn run_trials<R: Send>(count: u64, f: impl Fn(u64) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn run_trials<R: Send>(count: u64, f: impl Fn(u64) -> R + Sync + Send) -> Vec<R> {
    run_trials_sequential(count, f)
}

/// Runs trials `0..count` on the calling thread.
pub fn run_trials_sequential<R>(count: u64, f: impl Fn(u64) -> R) -> Vec<R> {
    (0..count).map(f).collect()
}

/// Worker cap from [`WORKERS_ENV`], if set to a positive integer.
pub fn worker_cap() -> Option<usize> {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
}

/// Runs `f` inside a pool of at most `workers` threads (all cores if `None`).
#[cfg(feature = "parallel")]
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match workers {
        Some(w) => match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        None => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_workers<R: Send>(_workers: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let f = |i: u64| i.wrapping_mul(0x9E37_79B9).rotate_left(7);
        assert_eq!(run_trials(1000, f), run_trials_sequential(1000, f));
    }

    #[test]
    fn map_preserves_order() {
        let xs: Vec<u32> = (0..100).collect();
        assert_eq!(
            map_ordered(&xs, |x| x * 2),
            xs.iter().map(|x| x * 2).collect::<Vec<_>>()
        );
    }

    #[test]
    fn bounded_pool_runs() {
        assert_eq!(with_workers(Some(2), || run_trials(10, |i| i).len()), 10);
    }
}
