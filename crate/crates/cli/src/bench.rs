//! Throughput measurement for the three dispatch modes.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::anyhow;
use neurofarm_core::default_spec;
use neurofarm_core::env::EnvDescriptor;
use neurofarm_core::evalmod::EvalContext;
use neurofarm_core::farm::{
    Dispatcher, EvalJob, FarmStats, Gateway, GatewayOptions, InProcessPool, NotifyMode, Worker, WorkerConfig,
    WorkerHandle,
};
use neurofarm_core::ga::xavier_init;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMode {
    /// In-process thread pool.
    Threads,
    Polling,
    Push,
}

impl std::str::FromStr for BenchMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "threads" => Ok(BenchMode::Threads),
            "polling" => Ok(BenchMode::Polling),
            "push" => Ok(BenchMode::Push),
            other => Err(format!("unknown mode `{other}` (threads, polling or push)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub mode: BenchMode,
    pub duration: Duration,
    pub threads: usize,
    /// Remote workers; when empty, `local_workers` are started on loopback.
    pub workers: Vec<String>,
    pub local_workers: usize,
    pub modules: usize,
    /// Added before every POLL request in polling mode.
    pub poll_latency: Duration,
    pub desc: EnvDescriptor,
    /// Jobs per dispatch round.
    pub batch: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            mode: BenchMode::Push,
            duration: Duration::from_secs(5),
            threads: 1,
            workers: Vec::new(),
            local_workers: 1,
            modules: 2,
            poll_latency: Duration::ZERO,
            desc: EnvDescriptor::default().with_frame_cap(1000),
            batch: 8,
        }
    }
}

/// Dispatches rounds of random-genome episodes until `duration` has passed.
pub fn run(opts: &BenchOptions, ctx: Arc<EvalContext>) -> anyhow::Result<FarmStats> {
    let mut _local: Vec<WorkerHandle> = Vec::new();
    let mut dispatcher: Box<dyn Dispatcher> = match opts.mode {
        BenchMode::Threads => Box::new(InProcessPool::new(opts.threads.max(1), ctx)),
        BenchMode::Polling | BenchMode::Push => {
            let addrs = if opts.workers.is_empty() {
                for _ in 0..opts.local_workers.max(1) {
                    let cfg = WorkerConfig { modules: opts.modules, ctx: Arc::clone(&ctx), ..WorkerConfig::default() };
                    _local.push(Worker::bind("127.0.0.1:0", cfg)?.spawn()?);
                }
                _local.iter().map(|h| h.addr().to_string()).collect()
            } else {
                opts.workers.clone()
            };
            let mode = if opts.mode == BenchMode::Push { NotifyMode::Push } else { NotifyMode::Polling };
            let gw_opts = GatewayOptions { mode, poll_latency: opts.poll_latency, ..GatewayOptions::default() };
            Box::new(Gateway::connect(&addrs, gw_opts).map_err(|e| anyhow!("cannot reach workers: {e}"))?)
        }
    };
    let spec = default_spec();
    let genomes: Vec<_> = (0..opts.batch.max(1) as u64).map(|i| Arc::new(xavier_init(&spec, 9000 + i, i))).collect();
    let started = Instant::now();
    let mut round = 0u64;
    while round == 0 || started.elapsed() < opts.duration {
        let jobs: Vec<EvalJob> = genomes
            .iter()
            .enumerate()
            .map(|(i, g)| EvalJob {
                genome: Arc::clone(g),
                desc: opts.desc,
                seed: round * genomes.len() as u64 + i as u64,
                priority: 0,
            })
            .collect();
        dispatcher.dispatch(&jobs).map_err(|e| anyhow!("{e}"))?;
        round += 1;
    }
    Ok(dispatcher.stats())
}

pub fn report(mode: BenchMode, s: &FarmStats) -> String {
    let mut r = String::new();
    let _ = writeln!(r, "mode             {mode:?}");
    let _ = writeln!(r, "frames           {}", s.frames);
    let _ = writeln!(r, "jobs_completed   {}", s.jobs_completed);
    let _ = writeln!(r, "elapsed_seconds  {:.3}", s.elapsed.as_secs_f64());
    let _ = writeln!(r, "frames_per_sec   {:.1}", s.frames_per_sec);
    let per: Vec<String> = s.per_worker_fps.iter().map(|f| format!("{f:.1}")).collect();
    let _ = writeln!(r, "per_worker_fps   {}", per.join(" "));
    let _ = writeln!(r, "jobs_in_flight   {}", s.jobs_in_flight);
    let _ = writeln!(r, "peak_in_flight   {}", s.peak_in_flight);
    let _ = writeln!(r, "bytes_in         {}", s.bytes_in);
    let _ = writeln!(r, "bytes_out        {}", s.bytes_out);
    r
}
