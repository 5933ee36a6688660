//! Distribution layer: a TCP register protocol, worker processes hosting
//! evaluation modules, a gateway dispatcher and an in-process thread pool.
//! Every dispatcher returns records in job order, so results never depend on
//! scheduling, worker count or failures.

mod gateway;
mod pool;
pub mod protocol;
mod worker;

pub use gateway::{Gateway, GatewayOptions, NotifyMode, RemoteError};
pub use pool::InProcessPool;
pub use worker::{Worker, WorkerConfig, WorkerHandle};

use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::env::EnvDescriptor;
use crate::evalmod::FitnessRecord;
use crate::ga::{EvalError, EvalRequest, Evaluation, Evaluator};
use crate::network::Genome;

/// Default evaluation modules per worker.
pub const DEFAULT_MODULES: usize = 2;

#[derive(Debug, Clone)]
pub struct EvalJob {
    pub genome: Arc<Genome>,
    pub desc: EnvDescriptor,
    pub seed: u64,
    /// Higher runs first; ties keep submission order.
    pub priority: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkerStatus {
    Connected,
    Lost,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerInfo {
    pub address: String,
    pub module_count: usize,
    pub status: WorkerStatus,
}

/// Throughput accounting, accumulated over all dispatches.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FarmStats {
    pub frames: u64,
    pub jobs_completed: u64,
    /// Wall time spent inside `dispatch`.
    pub elapsed: Duration,
    pub frames_per_sec: f64,
    /// One entry per worker (or pool thread). Sums to `frames_per_sec`.
    pub per_worker_fps: Vec<f64>,
    pub jobs_in_flight: usize,
    pub peak_in_flight: usize,
    pub bytes_in: u64,
    pub bytes_out: u64,
}

impl FarmStats {
    fn finish(&mut self, per_worker_frames: &[u64]) {
        let secs = self.elapsed.as_secs_f64();
        let rate = |f: u64| if secs > 0.0 { f as f64 / secs } else { 0.0 };
        self.frames_per_sec = rate(self.frames);
        self.per_worker_fps = per_worker_frames.iter().map(|&f| rate(f)).collect();
    }
}

#[derive(Debug, Error)]
#[error("dispatch failed: {message}")]
pub struct DispatchError {
    pub message: String,
    /// Records of the jobs that did complete, in job order.
    pub completed: Vec<Option<FitnessRecord>>,
}

pub trait Dispatcher {
    /// Runs every job; `result[i]` belongs to `jobs[i]`.
    fn dispatch(&mut self, jobs: &[EvalJob]) -> Result<Vec<FitnessRecord>, DispatchError>;
    fn stats(&self) -> FarmStats;
}

impl<D: Dispatcher + ?Sized> Dispatcher for Box<D> {
    fn dispatch(&mut self, jobs: &[EvalJob]) -> Result<Vec<FitnessRecord>, DispatchError> {
        (**self).dispatch(jobs)
    }

    fn stats(&self) -> FarmStats {
        (**self).stats()
    }
}

/// Job indices in run order: priority descending, then submission order.
fn run_order(jobs: &[EvalJob]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(jobs[i].priority));
    order
}

/// Adapts a dispatcher to the GA: one episode per request, fitness = score.
pub struct EpisodeEvaluator<D> {
    pub dispatcher: D,
    pub desc: EnvDescriptor,
}

impl<D: Dispatcher> EpisodeEvaluator<D> {
    pub fn new(dispatcher: D, desc: EnvDescriptor) -> Self {
        EpisodeEvaluator { dispatcher, desc }
    }
}

impl<D: Dispatcher> Evaluator for EpisodeEvaluator<D> {
    fn evaluate(&mut self, requests: &[EvalRequest]) -> Result<Vec<Evaluation>, EvalError> {
        let jobs: Vec<EvalJob> = requests
            .iter()
            .map(|r| EvalJob { genome: Arc::clone(&r.genome), desc: self.desc, seed: r.seed, priority: 0 })
            .collect();
        let records = self.dispatcher.dispatch(&jobs).map_err(|e| EvalError(e.to_string()))?;
        Ok(records
            .iter()
            .map(|r| Evaluation { fitness: f64::from(r.score), frames: u64::from(r.frames) })
            .collect())
    }
}
