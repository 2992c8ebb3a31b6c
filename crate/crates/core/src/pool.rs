//! A tiny scoped worker pool with per-worker state.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs `job(state, i)` for every `i in 0..n` on up to `workers` threads and
/// returns the results in index order. Each worker builds its own state
/// once with `init` (e.g. a dedicated adapter process).
pub fn run_indexed<S, T, I, F>(n: usize, workers: usize, init: I, job: F) -> Vec<T>
where
    I: Fn() -> S + Sync,
    F: Fn(&mut S, usize) -> T + Sync,
    T: Send,
{
    if n == 0 {
        return Vec::new();
    }
    let workers = workers.clamp(1, n);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                let mut state = init();
                loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    let out = job(&mut state, i);
                    slots.lock().expect("result slots poisoned")[i] = Some(out);
                }
            });
        }
    });

    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| r.expect("every index is processed"))
        .collect()
}
