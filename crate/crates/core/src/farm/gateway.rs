//! Gateway: one connection per worker and a single-threaded scheduling loop.

use std::collections::{HashSet, VecDeque};
use std::io::{BufReader, BufWriter};
use std::net::TcpStream;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::evalmod::{FitnessRecord, RegError};

use super::protocol::*;
use super::{run_order, DispatchError, Dispatcher, EvalJob, FarmStats, WorkerInfo, WorkerStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NotifyMode {
    /// The gateway polls every busy module.
    Polling,
    /// Workers push a RESULT frame when an episode finishes.
    Push,
}

#[derive(Debug, Clone)]
pub struct GatewayOptions {
    pub mode: NotifyMode,
    /// Simulated round-trip cost added before every POLL request.
    pub poll_latency: Duration,
    /// How long to wait for a reply before declaring a worker lost.
    pub reply_timeout: Duration,
}

impl Default for GatewayOptions {
    fn default() -> Self {
        GatewayOptions { mode: NotifyMode::Polling, poll_latency: Duration::ZERO, reply_timeout: Duration::from_secs(30) }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RemoteError {
    #[error("register error: {0}")]
    Register(RegError),
    #[error("worker error {code}: {message}")]
    Farm { code: u16, message: String },
    #[error("worker connection lost")]
    Lost,
    #[error("unexpected reply")]
    Unexpected,
}

enum Event {
    Result { worker: usize, module: u16, record: FitnessRecord },
    Lost { worker: usize },
}

struct Remote {
    info: WorkerInfo,
    writer: Option<BufWriter<TcpStream>>,
    stream: TcpStream,
    replies: Receiver<Message>,
    cached: HashSet<u64>,
    frames: u64,
}

pub struct Gateway {
    workers: Vec<Remote>,
    events: Receiver<Event>,
    opts: GatewayOptions,
    stats: FarmStats,
    bytes_in: Arc<AtomicU64>,
}

impl Gateway {
    /// Connects to every worker and performs the HELLO exchange.
    pub fn connect<S: AsRef<str>>(addrs: &[S], opts: GatewayOptions) -> Result<Self, RemoteError> {
        let (ev_tx, events) = mpsc::channel();
        let bytes_in = Arc::new(AtomicU64::new(0));
        let mut gw = Gateway { workers: Vec::new(), events, opts, stats: FarmStats::default(), bytes_in };
        for (w, addr) in addrs.iter().enumerate() {
            let addr = addr.as_ref();
            let stream = TcpStream::connect(addr).map_err(|e| RemoteError::Farm {
                code: ERR_UNEXPECTED,
                message: format!("cannot reach worker {addr}: {e}"),
            })?;
            let _ = stream.set_nodelay(true);
            let (rep_tx, replies) = mpsc::channel();
            let reader = stream.try_clone().map_err(|_| RemoteError::Lost)?;
            spawn_reader(w, reader, rep_tx, ev_tx.clone(), Arc::clone(&gw.bytes_in));
            gw.workers.push(Remote {
                info: WorkerInfo { address: addr.to_string(), module_count: 0, status: WorkerStatus::Connected },
                writer: Some(BufWriter::new(stream.try_clone().map_err(|_| RemoteError::Lost)?)),
                stream,
                replies,
                cached: HashSet::new(),
                frames: 0,
            });
            let flags = if gw.opts.mode == NotifyMode::Push { HELLO_PUSH } else { 0 };
            match gw.request(w, &Message::Hello { flags, module_count: 0 })? {
                Message::Hello { module_count, .. } if module_count > 0 => {
                    gw.workers[w].info.module_count = usize::from(module_count);
                }
                _ => return Err(RemoteError::Unexpected),
            }
        }
        Ok(gw)
    }

    pub fn workers(&self) -> Vec<WorkerInfo> {
        self.workers.iter().map(|r| r.info.clone()).collect()
    }

    fn live(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.workers.len()).filter(|&w| self.workers[w].info.status == WorkerStatus::Connected)
    }

    fn mark_lost(&mut self, w: usize) {
        let r = &mut self.workers[w];
        if r.info.status == WorkerStatus::Connected {
            log::warn!("worker {} lost", r.info.address);
            r.info.status = WorkerStatus::Lost;
            r.writer = None;
            let _ = r.stream.shutdown(std::net::Shutdown::Both);
        }
    }

    /// One request/response exchange with worker `w`.
    pub fn request(&mut self, w: usize, m: &Message) -> Result<Message, RemoteError> {
        let timeout = self.opts.reply_timeout;
        let r = &mut self.workers[w];
        let Some(writer) = r.writer.as_mut() else { return Err(RemoteError::Lost) };
        match write_message(writer, m) {
            Ok(n) => self.stats.bytes_out += n as u64,
            Err(_) => {
                self.mark_lost(w);
                return Err(RemoteError::Lost);
            }
        }
        match self.workers[w].replies.recv_timeout(timeout) {
            Ok(Message::Error { code, message }) => Err(match RegError::from_code(code) {
                Some(e) => RemoteError::Register(e),
                None => RemoteError::Farm { code, message },
            }),
            Ok(reply) => Ok(reply),
            Err(_) => {
                self.mark_lost(w);
                Err(RemoteError::Lost)
            }
        }
    }

    pub fn reg_read(&mut self, w: usize, module: u16, addr: u32) -> Result<u64, RemoteError> {
        match self.request(w, &Message::RegRead { module, addr })? {
            Message::RegValue { value } => Ok(value),
            _ => Err(RemoteError::Unexpected),
        }
    }

    pub fn reg_write(&mut self, w: usize, module: u16, addr: u32, value: u64) -> Result<(), RemoteError> {
        expect_ack(self.request(w, &Message::RegWrite { module, addr, value })?)
    }

    pub fn bulk_write(&mut self, w: usize, module: u16, target: BulkTarget, key: u64, offset: u32, data: Vec<u8>) -> Result<(), RemoteError> {
        expect_ack(self.request(w, &Message::BulkWrite { module, target, key, offset, data })?)
    }

    pub fn poll(&mut self, w: usize, module: u16) -> Result<ModuleStatus, RemoteError> {
        match self.request(w, &Message::Poll { module })? {
            Message::Status(s) => Ok(s),
            _ => Err(RemoteError::Unexpected),
        }
    }

    fn upload(&mut self, w: usize, job: &EvalJob) -> Result<(), RemoteError> {
        let id = job.genome.id();
        if !self.workers[w].cached.contains(&id) {
            self.bulk_write(w, 0, BulkTarget::GenomeCache, id, 0, job.genome.to_bytes())?;
            self.workers[w].cached.insert(id);
        }
        Ok(())
    }

    fn start(&mut self, w: usize, module: u16, job: &EvalJob) -> Result<(), RemoteError> {
        let start = Message::StartJob {
            module,
            genome_id: job.genome.id(),
            game_id: job.desc.game_id,
            frame_cap: job.desc.frame_cap,
            seed: job.seed,
        };
        self.upload(w, job)?;
        match self.request(w, &start) {
            Err(RemoteError::Farm { code: ERR_UNKNOWN_GENOME, .. }) => {
                // evicted from the worker's cache: upload again and retry once
                self.workers[w].cached.remove(&job.genome.id());
                self.upload(w, job)?;
                expect_ack(self.request(w, &start)?)
            }
            other => expect_ack(other?),
        }
    }
}

fn expect_ack(m: Message) -> Result<(), RemoteError> {
    match m {
        Message::Ack => Ok(()),
        _ => Err(RemoteError::Unexpected),
    }
}

fn spawn_reader(w: usize, stream: TcpStream, replies: Sender<Message>, events: Sender<Event>, bytes_in: Arc<AtomicU64>) {
    std::thread::spawn(move || {
        let mut r = BufReader::new(stream);
        loop {
            match read_message(&mut r) {
                Ok((m, n)) => {
                    bytes_in.fetch_add(n as u64, Ordering::Relaxed);
                    let delivered = match m {
                        Message::Result { module, record } => {
                            events.send(Event::Result { worker: w, module, record }).is_ok()
                        }
                        other => replies.send(other).is_ok(),
                    };
                    if !delivered {
                        return;
                    }
                }
                Err(_) => {
                    let _ = events.send(Event::Lost { worker: w });
                    return;
                }
            }
        }
    });
}

/// Per-dispatch scheduling state.
struct Schedule {
    queue: VecDeque<usize>,
    /// `slots[w][m]` is the job running on module `m` of worker `w`.
    slots: Vec<Vec<Option<usize>>>,
    results: Vec<Option<FitnessRecord>>,
    remaining: usize,
}

impl Schedule {
    fn in_flight(&self) -> usize {
        self.slots.iter().flatten().filter(|s| s.is_some()).count()
    }

    /// Requeues everything that was running on `w`.
    fn requeue(&mut self, w: usize) {
        for s in &mut self.slots[w] {
            if let Some(j) = s.take() {
                self.queue.push_front(j);
            }
        }
    }

    fn complete(&mut self, jobs: &[EvalJob], w: usize, module: usize, record: FitnessRecord) -> Option<u64> {
        let j = (*self.slots[w].get(module)?)?;
        let job = &jobs[j];
        if record.genome_id != job.genome.id() || record.eval_seed != job.seed {
            return None;
        }
        self.slots[w][module] = None;
        self.results[j] = Some(record);
        self.remaining -= 1;
        Some(u64::from(record.frames))
    }
}

impl Dispatcher for Gateway {
    fn dispatch(&mut self, jobs: &[EvalJob]) -> Result<Vec<FitnessRecord>, DispatchError> {
        let started = Instant::now();
        let mut s = Schedule {
            queue: run_order(jobs).into(),
            slots: self.workers.iter().map(|r| vec![None; r.info.module_count]).collect(),
            results: vec![None; jobs.len()],
            remaining: jobs.len(),
        };
        let outcome = self.run_schedule(jobs, &mut s);
        self.stats.elapsed += started.elapsed();
        self.stats.bytes_in = self.bytes_in.load(Ordering::Relaxed);
        self.stats.jobs_in_flight = s.in_flight();
        self.stats.jobs_completed += s.results.iter().flatten().count() as u64;
        let per: Vec<u64> = self.workers.iter().map(|r| r.frames).collect();
        self.stats.finish(&per);
        match outcome {
            Ok(()) => Ok(s.results.into_iter().map(|r| r.expect("all jobs complete")).collect()),
            Err(message) => Err(DispatchError { message, completed: s.results }),
        }
    }

    fn stats(&self) -> FarmStats {
        self.stats.clone()
    }
}

impl Gateway {
    fn run_schedule(&mut self, jobs: &[EvalJob], s: &mut Schedule) -> Result<(), String> {
        while s.remaining > 0 {
            self.fill(jobs, s)?;
            if self.live().next().is_none() {
                return Err(format!("all workers lost with {} of {} jobs unfinished", s.remaining, jobs.len()));
            }
            self.stats.peak_in_flight = self.stats.peak_in_flight.max(s.in_flight());
            match self.opts.mode {
                NotifyMode::Push => self.wait_push(jobs, s),
                NotifyMode::Polling => self.poll_round(jobs, s),
            }
        }
        Ok(())
    }

    /// Starts queued jobs on every free module of every live worker.
    fn fill(&mut self, jobs: &[EvalJob], s: &mut Schedule) -> Result<(), String> {
        let live: Vec<usize> = self.live().collect();
        for w in live {
            for m in 0..s.slots[w].len() {
                if s.slots[w][m].is_some() {
                    continue;
                }
                let Some(j) = s.queue.pop_front() else { return Ok(()) };
                match self.start(w, m as u16, &jobs[j]) {
                    Ok(()) => s.slots[w][m] = Some(j),
                    Err(RemoteError::Lost) => {
                        s.queue.push_front(j);
                        s.requeue(w);
                        break;
                    }
                    Err(e) => return Err(format!("worker {}: {e}", self.workers[w].info.address)),
                }
            }
        }
        Ok(())
    }

    fn on_event(&mut self, jobs: &[EvalJob], s: &mut Schedule, ev: Event) {
        match ev {
            Event::Result { worker, module, record } => {
                if self.workers[worker].info.status != WorkerStatus::Connected {
                    return;
                }
                if let Some(f) = s.complete(jobs, worker, usize::from(module), record) {
                    self.workers[worker].frames += f;
                    self.stats.frames += f;
                }
            }
            Event::Lost { worker } => {
                self.mark_lost(worker);
                s.requeue(worker);
            }
        }
    }

    fn wait_push(&mut self, jobs: &[EvalJob], s: &mut Schedule) {
        match self.events.recv_timeout(self.opts.reply_timeout) {
            Ok(ev) => {
                self.on_event(jobs, s, ev);
                while let Ok(ev) = self.events.try_recv() {
                    self.on_event(jobs, s, ev);
                }
            }
            Err(RecvTimeoutError::Timeout) => {
                // silent workers with work outstanding are treated as lost
                for w in self.live().collect::<Vec<_>>() {
                    if s.slots[w].iter().any(Option::is_some) {
                        self.mark_lost(w);
                        s.requeue(w);
                    }
                }
            }
            Err(RecvTimeoutError::Disconnected) => unreachable!("gateway holds the sender side"),
        }
    }

    fn poll_round(&mut self, jobs: &[EvalJob], s: &mut Schedule) {
        while let Ok(ev) = self.events.try_recv() {
            self.on_event(jobs, s, ev);
        }
        for w in self.live().collect::<Vec<_>>() {
            for m in 0..s.slots[w].len() {
                if s.slots[w][m].is_none() {
                    continue;
                }
                if !self.opts.poll_latency.is_zero() {
                    std::thread::sleep(self.opts.poll_latency);
                }
                match self.poll(w, m as u16) {
                    Ok(st) => {
                        if let Some(record) = st.record() {
                            if let Some(f) = s.complete(jobs, w, m, record) {
                                self.workers[w].frames += f;
                                self.stats.frames += f;
                            }
                        }
                    }
                    Err(_) => {
                        self.mark_lost(w);
                        s.requeue(w);
                        break;
                    }
                }
            }
        }
        if self.opts.poll_latency.is_zero() {
            // avoid spinning on an idle loopback
            std::thread::sleep(Duration::from_micros(200));
        }
    }
}
