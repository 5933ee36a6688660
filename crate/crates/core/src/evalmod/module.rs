//! A long-lived evaluation module: one loop thread plus a register file that
//! other threads read and write.
//!
//! Readable state is published through a sequence lock so reads never block
//! the loop. Only one side writes it at a time: control writes happen while
//! the module is idle or done, the loop thread writes while it is running.

use std::sync::atomic::{fence, AtomicBool, AtomicI32, AtomicU32, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crate::env::{EnvDescriptor, ReplayFixture, GAME_CATCH, GAME_REPLAY};
use crate::network::{Genome, PreparedNetwork};

use super::registers::*;
use super::{run_episode_with, EvalContext, FitnessRecord, Flow};

/// Called from the loop thread when an episode finishes.
pub type Notifier = Arc<dyn Fn(usize, Option<FitnessRecord>) + Send + Sync>;

#[derive(Default)]
struct Published {
    seq: AtomicU64,
    status: AtomicU32,
    score: AtomicI32,
    frame_count: AtomicU32,
    clock_count: AtomicU64,
}

struct Snapshot {
    status: u32,
    score: i32,
    frame_count: u32,
    clock_count: u64,
}

impl Published {
    fn publish(&self, s: Snapshot) {
        let seq = self.seq.load(Ordering::Relaxed);
        self.seq.store(seq.wrapping_add(1), Ordering::Relaxed);
        fence(Ordering::Release);
        self.status.store(s.status, Ordering::Relaxed);
        self.score.store(s.score, Ordering::Relaxed);
        self.frame_count.store(s.frame_count, Ordering::Relaxed);
        self.clock_count.store(s.clock_count, Ordering::Relaxed);
        self.seq.store(seq.wrapping_add(2), Ordering::Release);
    }

    fn read(&self) -> Snapshot {
        loop {
            let s1 = self.seq.load(Ordering::Acquire);
            if s1 & 1 == 1 {
                std::hint::spin_loop();
                continue;
            }
            let snap = Snapshot {
                status: self.status.load(Ordering::Relaxed),
                score: self.score.load(Ordering::Relaxed),
                frame_count: self.frame_count.load(Ordering::Relaxed),
                clock_count: self.clock_count.load(Ordering::Relaxed),
            };
            fence(Ordering::Acquire);
            if self.seq.load(Ordering::Relaxed) == s1 {
                return snap;
            }
        }
    }
}

struct Control {
    param: Vec<u8>,
    rom: Vec<u8>,
    /// Set directly by `load_genome`; a param window upload replaces it.
    genome: Option<Arc<Genome>>,
}

struct Job {
    genome: Arc<Genome>,
    desc: EnvDescriptor,
    seed: u64,
    fixture: Option<Arc<ReplayFixture>>,
}

struct Shared {
    index: usize,
    ctx: Arc<EvalContext>,
    published: Published,
    game_id: AtomicU32,
    frame_cap: AtomicU32,
    genome_id: AtomicU64,
    /// Seed of the episode started last.
    eval_seed: AtomicU64,
    stop: AtomicBool,
    control: Mutex<Control>,
    result: Mutex<Option<FitnessRecord>>,
    /// Bumped on every finished episode.
    done: (Mutex<u64>, Condvar),
    notifier: Option<Notifier>,
}

/// One evaluation module instance.
pub struct EvalModule {
    shared: Arc<Shared>,
    jobs: Option<Sender<Job>>,
    thread: Option<JoinHandle<()>>,
}

impl EvalModule {
    pub fn new(ctx: Arc<EvalContext>) -> Self {
        Self::with_notifier(ctx, 0, None)
    }

    pub fn with_notifier(ctx: Arc<EvalContext>, index: usize, notifier: Option<Notifier>) -> Self {
        let shared = Arc::new(Shared {
            index,
            ctx,
            published: Published::default(),
            game_id: AtomicU32::new(GAME_CATCH),
            frame_cap: AtomicU32::new(crate::env::DEFAULT_FRAME_CAP),
            genome_id: AtomicU64::new(0),
            eval_seed: AtomicU64::new(0),
            stop: AtomicBool::new(false),
            control: Mutex::new(Control { param: Vec::new(), rom: Vec::new(), genome: None }),
            result: Mutex::new(None),
            done: (Mutex::new(0), Condvar::new()),
            notifier,
        });
        let (tx, rx) = mpsc::channel();
        let worker = Arc::clone(&shared);
        let thread = std::thread::Builder::new()
            .name(format!("evalmod-{index}"))
            .spawn(move || loop_thread(worker, rx))
            .expect("spawn evaluation thread");
        EvalModule { shared, jobs: Some(tx), thread: Some(thread) }
    }

    pub fn index(&self) -> usize {
        self.shared.index
    }

    /// Consistent snapshot of all readable registers.
    pub fn registers(&self) -> RegisterFile {
        let s = self.shared.published.read();
        RegisterFile {
            game_id: self.shared.game_id.load(Ordering::Relaxed),
            status: Status::from_u32(s.status).expect("published status is valid"),
            score: s.score,
            frame_count: s.frame_count,
            clock_count: s.clock_count,
            frame_cap: self.shared.frame_cap.load(Ordering::Relaxed),
            genome_id: self.shared.genome_id.load(Ordering::Relaxed),
        }
    }

    pub fn status(&self) -> Status {
        self.registers().status
    }

    pub fn read(&self, addr: u32) -> Result<u64, RegError> {
        self.registers().read(addr)
    }

    pub fn write(&self, addr: u32, value: u64) -> Result<(), RegError> {
        let mut ctl = self.shared.control.lock().unwrap();
        match addr {
            REG_COMMAND => {
                let cmd = u32::try_from(value).map_err(|_| RegError::OutOfRange)?;
                if cmd & !(CMD_RESET | CMD_START | CMD_STOP) != 0 {
                    return Err(RegError::OutOfRange);
                }
                self.command(&mut ctl, cmd)
            }
            REG_GAME_ID | REG_FRAME_CAP | REG_GENOME_ID => {
                self.ensure_not_running()?;
                match addr {
                    REG_GAME_ID => {
                        let v = u32::try_from(value).map_err(|_| RegError::OutOfRange)?;
                        self.shared.game_id.store(v, Ordering::Relaxed);
                    }
                    REG_FRAME_CAP => {
                        let v = u32::try_from(value).map_err(|_| RegError::OutOfRange)?;
                        self.shared.frame_cap.store(v, Ordering::Relaxed);
                    }
                    _ => self.shared.genome_id.store(value, Ordering::Relaxed),
                }
                Ok(())
            }
            REG_STATUS | REG_SCORE | REG_FRAME_COUNT | REG_CLOCK_COUNT => Err(RegError::ReadOnly),
            a if Window::locate(a).is_some() => Err(RegError::OutOfRange),
            _ => Err(RegError::BadAddress),
        }
    }

    /// Byte write into a window. A write at offset 0 starts a new upload and
    /// discards the previous window contents.
    pub fn write_bytes(&self, addr: u32, data: &[u8]) -> Result<(), RegError> {
        let (window, offset) = Window::locate(addr).ok_or(RegError::BadAddress)?;
        let end = offset as usize + data.len();
        if end > WINDOW_SPAN as usize {
            return Err(RegError::OutOfRange);
        }
        let mut ctl = self.shared.control.lock().unwrap();
        self.ensure_not_running()?;
        let buf = match window {
            Window::Param => {
                ctl.genome = None;
                &mut ctl.param
            }
            Window::Rom => &mut ctl.rom,
        };
        if offset == 0 {
            buf.clear();
        }
        if buf.len() < end {
            buf.resize(end, 0);
        }
        buf[offset as usize..end].copy_from_slice(data);
        Ok(())
    }

    /// Loads an already-parsed genome and sets the genome id register.
    pub fn load_genome(&self, genome: Arc<Genome>) -> Result<(), RegError> {
        let mut ctl = self.shared.control.lock().unwrap();
        self.ensure_not_running()?;
        self.shared.genome_id.store(genome.id(), Ordering::Relaxed);
        ctl.param.clear();
        ctl.genome = Some(genome);
        Ok(())
    }

    /// Seed of the episode started last.
    pub fn eval_seed(&self) -> u64 {
        self.shared.eval_seed.load(Ordering::Relaxed)
    }

    /// Record of the last finished episode, if it completed normally.
    pub fn result(&self) -> Option<FitnessRecord> {
        *self.shared.result.lock().unwrap()
    }

    /// Number of episodes finished so far.
    pub fn completed(&self) -> u64 {
        *self.shared.done.0.lock().unwrap()
    }

    /// Blocks until at least `count` episodes have finished or the timeout
    /// passes. Returns whether the count was reached.
    pub fn wait_completed(&self, count: u64, timeout: Duration) -> bool {
        let (lock, cv) = &self.shared.done;
        let deadline = Instant::now() + timeout;
        let mut n = lock.lock().unwrap();
        while *n < count {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return false;
            }
            n = cv.wait_timeout(n, left).unwrap().0;
        }
        true
    }

    fn ensure_not_running(&self) -> Result<(), RegError> {
        if self.status() == Status::Running {
            Err(RegError::Busy)
        } else {
            Ok(())
        }
    }

    fn command(&self, ctl: &mut Control, cmd: u32) -> Result<(), RegError> {
        let mut status = self.status();
        if cmd & CMD_RESET != 0 {
            if status == Status::Running {
                return Err(RegError::IllegalTransition);
            }
            status = Status::Idle;
            *self.shared.result.lock().unwrap() = None;
            self.shared.published.publish(Snapshot { status: 0, score: 0, frame_count: 0, clock_count: 0 });
        }
        if cmd & CMD_START != 0 {
            if status != Status::Idle {
                return Err(RegError::IllegalTransition);
            }
            let job = self.prepare_job(ctl)?;
            self.shared.stop.store(false, Ordering::SeqCst);
            self.shared.eval_seed.store(job.seed, Ordering::Relaxed);
            self.shared.published.publish(Snapshot { status: Status::Running as u32, score: 0, frame_count: 0, clock_count: 0 });
            status = Status::Running;
            self.jobs.as_ref().expect("module alive").send(job).expect("loop thread alive");
        }
        if cmd & CMD_STOP != 0 {
            if status != Status::Running {
                return Err(RegError::IllegalTransition);
            }
            self.shared.stop.store(true, Ordering::SeqCst);
        }
        Ok(())
    }

    fn prepare_job(&self, ctl: &mut Control) -> Result<Job, RegError> {
        let genome_id = self.shared.genome_id.load(Ordering::Relaxed);
        let genome = match &ctl.genome {
            Some(g) if g.id() == genome_id => Arc::clone(g),
            Some(g) => Arc::new((**g).clone().with_id(genome_id)),
            None if ctl.param.is_empty() => return Err(RegError::IllegalTransition),
            None => {
                let g = Genome::from_bytes(genome_id, &ctl.param).map_err(|_| RegError::BadPayload)?;
                let g = Arc::new(g);
                ctl.genome = Some(Arc::clone(&g));
                g
            }
        };
        if genome.check_len(&self.shared.ctx.spec).is_err() {
            return Err(RegError::BadPayload);
        }
        let seed = match ctl.rom.len() {
            0 => 0,
            n if n < 8 => return Err(RegError::BadPayload),
            _ => u64::from_le_bytes(ctl.rom[..8].try_into().unwrap()),
        };
        let game_id = self.shared.game_id.load(Ordering::Relaxed);
        let fixture = match game_id {
            GAME_CATCH => None,
            GAME_REPLAY if ctl.rom.len() > 8 => {
                let f = ReplayFixture::from_bytes(&ctl.rom[8..]).map_err(|_| RegError::BadPayload)?;
                Some(Arc::new(f))
            }
            GAME_REPLAY if self.shared.ctx.env.replay.is_some() => None,
            GAME_REPLAY => return Err(RegError::BadPayload),
            _ => return Err(RegError::Unsupported),
        };
        let desc = EnvDescriptor::new(game_id).with_frame_cap(self.shared.frame_cap.load(Ordering::Relaxed));
        Ok(Job { genome, desc, seed, fixture })
    }
}

impl Drop for EvalModule {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        drop(self.jobs.take());
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn loop_thread(shared: Arc<Shared>, jobs: Receiver<Job>) {
    while let Ok(job) = jobs.recv() {
        let start = Instant::now();
        let clock = || start.elapsed().as_nanos() as u64;
        let publish = |status: Status, frames: u32, score: i32| {
            shared.published.publish(Snapshot { status: status as u32, score, frame_count: frames, clock_count: clock() });
        };
        let outcome = PreparedNetwork::new(&shared.ctx.spec, &job.genome)
            .and_then(|net| {
                run_episode_with(&shared.ctx, &net, job.genome.id(), &job.desc, job.seed, job.fixture, |f, s| {
                    publish(Status::Running, f, s);
                    if shared.stop.load(Ordering::Relaxed) {
                        Flow::Stop
                    } else {
                        Flow::Continue
                    }
                })
            });
        let record = match outcome {
            Ok(rep) => {
                let r = rep.record;
                *shared.result.lock().unwrap() = Some(r);
                publish(r.termination.status(), r.frames, r.score);
                Some(r)
            }
            Err(e) => {
                log::warn!("module {}: episode failed: {e}", shared.index);
                let snap = shared.published.read();
                publish(Status::Fault, snap.frame_count, snap.score);
                None
            }
        };
        {
            let (lock, cv) = &shared.done;
            *lock.lock().unwrap() += 1;
            cv.notify_all();
        }
        if let Some(n) = &shared.notifier {
            n(shared.index, record);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::default_spec;

    fn module() -> EvalModule {
        EvalModule::new(Arc::new(EvalContext::default()))
    }

    #[test]
    fn start_requires_genome() {
        let m = module();
        assert_eq!(m.status(), Status::Idle);
        assert_eq!(m.write(REG_COMMAND, u64::from(CMD_START)), Err(RegError::IllegalTransition));
    }

    #[test]
    fn full_cycle_through_registers() {
        let m = module();
        let g = Genome::zeros(&default_spec(), 0);
        m.write_bytes(PARAM_WINDOW, &g.to_bytes()).unwrap();
        m.write(REG_GENOME_ID, 42).unwrap();
        m.write(REG_FRAME_CAP, 40).unwrap();
        m.write_bytes(ROM_WINDOW, &7u64.to_le_bytes()).unwrap();
        m.write(REG_COMMAND, u64::from(CMD_START)).unwrap();
        assert!(m.wait_completed(1, Duration::from_secs(30)));
        let regs = m.registers();
        assert_eq!(regs.status, Status::DoneTimeout);
        assert_eq!(regs.frame_count, 40);
        let r = m.result().unwrap();
        assert_eq!(r.genome_id, 42);
        assert_eq!(r.eval_seed, 7);
        assert_eq!(r.score, regs.score);
        assert_eq!(m.write(REG_COMMAND, u64::from(CMD_START)), Err(RegError::IllegalTransition));
        m.write(REG_COMMAND, u64::from(CMD_RESET)).unwrap();
        assert_eq!(m.status(), Status::Idle);
        assert_eq!(m.result(), None);
    }

    #[test]
    fn access_errors() {
        let m = module();
        assert_eq!(m.read(REG_COMMAND), Err(RegError::WriteOnly));
        assert_eq!(m.read(0x44), Err(RegError::BadAddress));
        assert_eq!(m.read(PARAM_WINDOW + 4), Err(RegError::WriteOnly));
        assert_eq!(m.write(REG_STATUS, 1), Err(RegError::ReadOnly));
        assert_eq!(m.write(0x3, 1), Err(RegError::BadAddress));
        assert_eq!(m.write(REG_COMMAND, 8), Err(RegError::OutOfRange));
        assert_eq!(m.write(REG_COMMAND, u64::from(CMD_STOP)), Err(RegError::IllegalTransition));
        m.write_bytes(PARAM_WINDOW, b"junk").unwrap();
        assert_eq!(m.write(REG_COMMAND, u64::from(CMD_START)), Err(RegError::BadPayload));
        m.load_genome(Arc::new(Genome::zeros(&default_spec(), 1))).unwrap();
        m.write(REG_GAME_ID, 9).unwrap();
        assert_eq!(m.write(REG_COMMAND, u64::from(CMD_START)), Err(RegError::Unsupported));
    }

    #[test]
    fn stop_and_busy_guards() {
        let m = module();
        m.load_genome(Arc::new(Genome::zeros(&default_spec(), 5))).unwrap();
        m.write(REG_COMMAND, u64::from(CMD_START)).unwrap();
        // default cap is long, so the episode is still running or just died
        if m.status() == Status::Running {
            let a = m.read(REG_FRAME_COUNT).unwrap_or(0);
            let b = m.read(REG_FRAME_COUNT).unwrap_or(0);
            assert!(b >= a);
            let w = m.write_bytes(PARAM_WINDOW, &[0; 4]);
            let r = m.write(REG_COMMAND, u64::from(CMD_RESET));
            if m.status() == Status::Running {
                assert_eq!(w, Err(RegError::Busy));
                assert_eq!(r, Err(RegError::IllegalTransition));
            }
            let _ = m.write(REG_COMMAND, u64::from(CMD_STOP));
        }
        assert!(m.wait_completed(1, Duration::from_secs(60)));
        assert!(m.status().is_done());
    }
}
