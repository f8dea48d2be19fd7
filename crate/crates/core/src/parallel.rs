//! Replica execution. With the `parallel` feature (default) replicas run on
//! a rayon pool; without it, sequentially. Results come back in replica
//! order either way, and each replica derives its own RNG stream, so the
//! two paths produce identical output.

/// Environment variable consulted for the default worker count.
pub const WORKERS_ENV: &str = "BRINT_WORKERS";

/// Default worker count: `$BRINT_WORKERS` if set, else the number of
/// available CPUs (1 when the feature is off).
pub fn default_workers() -> usize {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                return n;
            }
        }
    }
    #[cfg(feature = "parallel")]
    {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Runs `f(replica_index)` for `replicas` indices on `workers` workers and
/// returns the results in index order.
pub fn map_replicas<T, F>(workers: usize, replicas: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    #[cfg(feature = "parallel")]
    {
        if workers > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .expect("worker pool");
            use rayon::prelude::*;
            return pool.install(|| (0..replicas).into_par_iter().map(&f).collect());
        }
    }
    let _ = workers;
    (0..replicas).map(f).collect()
}

/// Fold-style wrapper: runs replicas in chunks and merges chunk accumulators
/// in chunk order. `chunk` trades scheduling overhead against granularity.
pub fn fold_replicas<A, F, M>(workers: usize, replicas: u64, chunk: u64, f: F, merge: M) -> A
where
    A: Default + Send,
    F: Fn(u64, &mut A) + Sync,
    M: Fn(&mut A, A),
{
    let chunk = chunk.max(1);
    let chunks = replicas.div_ceil(chunk);
    let parts = map_replicas(workers, chunks, |c| {
        let mut acc = A::default();
        let lo = c * chunk;
        let hi = ((c + 1) * chunk).min(replicas);
        for r in lo..hi {
            f(r, &mut acc);
        }
        acc
    });
    let mut out = A::default();
    for p in parts {
        merge(&mut out, p);
    }
    out
}
