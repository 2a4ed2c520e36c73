//! Bounded worker pool with deterministic result order.

use std::collections::VecDeque;
use std::sync::Mutex;

/// Runs `work` on every job using up to `workers` threads and returns the
/// results sorted by key, so the output never depends on scheduling.
pub fn run_jobs<K, J, R, F>(jobs: Vec<(K, J)>, workers: usize, work: F) -> Vec<(K, R)>
where
    K: Ord + Clone + Send,
    J: Send,
    R: Send,
    F: Fn(&K, J) -> R + Sync,
{
    let threads = workers.max(1).min(jobs.len().max(1));
    let queue = Mutex::new(jobs.into_iter().collect::<VecDeque<_>>());
    let results = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let next = queue.lock().expect("job queue poisoned").pop_front();
                let Some((key, job)) = next else { break };
                let r = work(&key, job);
                results.lock().expect("result list poisoned").push((key, r));
            });
        }
    });
    let mut out = results.into_inner().expect("result list poisoned");
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}
