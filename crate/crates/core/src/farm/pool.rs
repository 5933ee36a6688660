use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use crate::evalmod::{run_episode_with, EvalContext, FitnessRecord, Flow};
use crate::network::PreparedNetwork;

use super::{run_order, DispatchError, Dispatcher, EvalJob, FarmStats};

/// Desk-scale dispatcher: episodes on local threads, no sockets.
pub struct InProcessPool {
    threads: usize,
    ctx: Arc<EvalContext>,
    stats: FarmStats,
    per_thread_frames: Vec<u64>,
}

impl InProcessPool {
    /// # Panics
    /// If `threads` is zero.
    pub fn new(threads: usize, ctx: Arc<EvalContext>) -> Self {
        assert!(threads > 0, "pool needs at least one thread");
        InProcessPool { threads, ctx, stats: FarmStats::default(), per_thread_frames: vec![0; threads] }
    }

    pub fn threads(&self) -> usize {
        self.threads
    }
}

impl Dispatcher for InProcessPool {
    fn dispatch(&mut self, jobs: &[EvalJob]) -> Result<Vec<FitnessRecord>, DispatchError> {
        let started = Instant::now();
        let order = run_order(jobs);
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<Option<FitnessRecord>>> = Mutex::new(vec![None; jobs.len()]);
        let failure: Mutex<Option<String>> = Mutex::new(None);
        let ctx = &*self.ctx;
        let frames: Vec<u64> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..self.threads.min(jobs.len()))
                .map(|_| {
                    s.spawn(|| {
                        let mut frames = 0u64;
                        loop {
                            let k = next.fetch_add(1, Ordering::Relaxed);
                            let Some(&j) = order.get(k) else { break };
                            if failure.lock().unwrap().is_some() {
                                break;
                            }
                            let job = &jobs[j];
                            let outcome = PreparedNetwork::new(&ctx.spec, &job.genome).and_then(|net| {
                                run_episode_with(ctx, &net, job.genome.id(), &job.desc, job.seed, None, |_, _| Flow::Continue)
                            });
                            match outcome {
                                Ok(rep) => {
                                    frames += u64::from(rep.record.frames);
                                    results.lock().unwrap()[j] = Some(rep.record);
                                }
                                Err(e) => {
                                    failure.lock().unwrap().get_or_insert(e.to_string());
                                    break;
                                }
                            }
                        }
                        frames
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("pool thread panicked")).collect()
        });
        self.stats.elapsed += started.elapsed();
        for (acc, f) in self.per_thread_frames.iter_mut().zip(&frames) {
            *acc += f;
        }
        self.stats.frames += frames.iter().sum::<u64>();
        self.stats.peak_in_flight = self.stats.peak_in_flight.max(self.threads.min(jobs.len()));
        let results = results.into_inner().unwrap();
        self.stats.jobs_completed += results.iter().flatten().count() as u64;
        let per = self.per_thread_frames.clone();
        self.stats.finish(&per);
        if let Some(message) = failure.into_inner().unwrap() {
            return Err(DispatchError { message, completed: results });
        }
        Ok(results.into_iter().map(|r| r.expect("every job ran")).collect())
    }

    fn stats(&self) -> FarmStats {
        self.stats.clone()
    }
}
