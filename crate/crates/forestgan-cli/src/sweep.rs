//! Worker-pool fan-out for multi-seed sweeps.  Each job owns its output
//! directory, so jobs never contend on files; the caller reduces the
//! returned results after all workers finish.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use forestgan::error::Result;

/// Runs `job(0..n)` across up to `available_parallelism` threads and
/// returns the results in index order; the first failing job's error wins.
pub fn fan_out<T: Send>(n: usize, job: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let workers = std::thread::available_parallelism()
        .map(|p| p.get())
        .unwrap_or(1)
        .min(n)
        .max(1);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let result = job(i);
                slots.lock().expect("no poisoned sweep slots")[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .expect("no poisoned sweep slots")
        .into_iter()
        .map(|slot| slot.expect("every index was claimed"))
        .collect()
}
