//! Worker process: hosts evaluation modules and answers protocol requests.

use std::collections::{HashMap, VecDeque};
use std::io::{self, BufReader, BufWriter};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use crate::evalmod::{
    EvalContext, EvalModule, FitnessRecord, Notifier, RegError, Status, CMD_RESET, CMD_START, PARAM_WINDOW,
    REG_COMMAND, REG_FRAME_CAP, REG_GAME_ID, ROM_WINDOW,
};
use crate::network::Genome;

use super::protocol::*;
use super::DEFAULT_MODULES;

#[derive(Debug, Clone)]
pub struct WorkerConfig {
    pub modules: usize,
    /// Genomes kept in the upload cache (least recently used evicted).
    pub cache_capacity: usize,
    pub ctx: Arc<EvalContext>,
}

impl Default for WorkerConfig {
    fn default() -> Self {
        WorkerConfig { modules: DEFAULT_MODULES, cache_capacity: 128, ctx: Arc::new(EvalContext::default()) }
    }
}

struct GenomeCache {
    capacity: usize,
    map: HashMap<u64, Arc<Genome>>,
    order: VecDeque<u64>,
}

impl GenomeCache {
    fn get(&mut self, id: u64) -> Option<Arc<Genome>> {
        let g = self.map.get(&id).cloned()?;
        self.touch(id);
        Some(g)
    }

    fn touch(&mut self, id: u64) {
        if let Some(pos) = self.order.iter().position(|&x| x == id) {
            self.order.remove(pos);
        }
        self.order.push_back(id);
    }

    fn insert(&mut self, g: Arc<Genome>) {
        let id = g.id();
        self.map.insert(id, g);
        self.touch(id);
        while self.order.len() > self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.map.remove(&old);
            }
        }
    }
}

struct Inner {
    modules: Vec<EvalModule>,
    cache: Mutex<GenomeCache>,
    /// Connections that asked for pushed results.
    subscribers: Arc<Mutex<HashMap<u64, Sender<Message>>>>,
    /// Live connections, kept so `kill` can drop them.
    streams: Mutex<HashMap<u64, TcpStream>>,
    next_conn: AtomicU64,
    shutdown: AtomicBool,
}

/// A bound worker; call [`Worker::run`] or [`Worker::spawn`].
pub struct Worker {
    listener: TcpListener,
    inner: Arc<Inner>,
}

impl Worker {
    pub fn bind(addr: impl ToSocketAddrs, cfg: WorkerConfig) -> io::Result<Self> {
        if cfg.modules == 0 {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "module count must be at least 1"));
        }
        let listener = TcpListener::bind(addr)?;
        let subscribers: Arc<Mutex<HashMap<u64, Sender<Message>>>> = Arc::default();
        let subs = Arc::clone(&subscribers);
        let notifier: Notifier = Arc::new(move |module: usize, record: Option<FitnessRecord>| {
            let Some(record) = record else { return };
            let msg = Message::Result { module: module as u16, record };
            for tx in subs.lock().unwrap().values() {
                let _ = tx.send(msg.clone());
            }
        });
        let modules = (0..cfg.modules)
            .map(|i| EvalModule::with_notifier(Arc::clone(&cfg.ctx), i, Some(Arc::clone(&notifier))))
            .collect();
        let inner = Arc::new(Inner {
            modules,
            cache: Mutex::new(GenomeCache { capacity: cfg.cache_capacity.max(1), map: HashMap::new(), order: VecDeque::new() }),
            subscribers,
            streams: Mutex::new(HashMap::new()),
            next_conn: AtomicU64::new(0),
            shutdown: AtomicBool::new(false),
        });
        Ok(Worker { listener, inner })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn module_count(&self) -> usize {
        self.inner.modules.len()
    }

    /// Accept loop; returns after [`WorkerHandle::kill`].
    pub fn run(self) -> io::Result<()> {
        for stream in self.listener.incoming() {
            if self.inner.shutdown.load(Ordering::SeqCst) {
                break;
            }
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            };
            let inner = Arc::clone(&self.inner);
            std::thread::Builder::new()
                .name("worker-conn".into())
                .spawn(move || {
                    if let Err(e) = serve_connection(&inner, stream) {
                        log::debug!("connection ended: {e}");
                    }
                })?;
        }
        Ok(())
    }

    /// Runs the accept loop on a background thread.
    pub fn spawn(self) -> io::Result<WorkerHandle> {
        let addr = self.local_addr()?;
        let inner = Arc::clone(&self.inner);
        let thread = std::thread::Builder::new().name("worker-accept".into()).spawn(move || self.run())?;
        Ok(WorkerHandle { addr, inner, thread: Some(thread) })
    }
}

/// A worker running in the background. Dropping it kills the worker.
pub struct WorkerHandle {
    addr: SocketAddr,
    inner: Arc<Inner>,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl WorkerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting and drops every open connection, as if the process
    /// had died.
    pub fn kill(&mut self) {
        if self.inner.shutdown.swap(true, Ordering::SeqCst) {
            return;
        }
        for s in self.inner.streams.lock().unwrap().values() {
            let _ = s.shutdown(Shutdown::Both);
        }
        // wake the accept loop
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for WorkerHandle {
    fn drop(&mut self) {
        self.kill();
    }
}

fn serve_connection(inner: &Arc<Inner>, stream: TcpStream) -> Result<(), ProtocolError> {
    if inner.shutdown.load(Ordering::SeqCst) {
        return Ok(());
    }
    stream.set_nodelay(true)?;
    let id = inner.next_conn.fetch_add(1, Ordering::Relaxed);
    inner.streams.lock().unwrap().insert(id, stream.try_clone()?);
    let (tx, rx) = mpsc::channel::<Message>();
    let mut writer = BufWriter::new(stream.try_clone()?);
    let write_stream = stream.try_clone()?;
    let writer_thread = std::thread::spawn(move || {
        for m in rx {
            if write_message(&mut writer, &m).is_err() {
                break;
            }
        }
        let _ = write_stream.shutdown(Shutdown::Both);
    });
    let mut reader = BufReader::new(stream);
    let result = loop {
        match read_message(&mut reader) {
            Ok((m, _)) => {
                let reply = handle(inner, id, &tx, m);
                if tx.send(reply).is_err() {
                    break Ok(());
                }
            }
            Err(e) if e.is_eof() => break Ok(()),
            Err(ProtocolError::Io(e)) => break Err(ProtocolError::Io(e)),
            Err(e) => {
                log::warn!("closing connection after malformed frame: {e}");
                let _ = tx.send(Message::error(ERR_MALFORMED, e.to_string()));
                break Err(e);
            }
        }
    };
    inner.subscribers.lock().unwrap().remove(&id);
    inner.streams.lock().unwrap().remove(&id);
    drop(tx);
    let _ = writer_thread.join();
    result
}

fn reg_reply(r: Result<(), RegError>) -> Message {
    match r {
        Ok(()) => Message::Ack,
        Err(e) => Message::error(e.code(), e.to_string()),
    }
}

fn handle(inner: &Inner, conn: u64, tx: &Sender<Message>, m: Message) -> Message {
    let module = |i: u16| inner.modules.get(usize::from(i));
    let bad_module = |i: u16| Message::error(ERR_BAD_MODULE, format!("no module {i}"));
    match m {
        Message::Hello { flags, .. } => {
            if flags & HELLO_PUSH != 0 {
                inner.subscribers.lock().unwrap().insert(conn, tx.clone());
            }
            Message::Hello { flags, module_count: inner.modules.len() as u16 }
        }
        Message::RegRead { module: i, addr } => match module(i) {
            None => bad_module(i),
            Some(md) => match md.read(addr) {
                Ok(value) => Message::RegValue { value },
                Err(e) => Message::error(e.code(), e.to_string()),
            },
        },
        Message::RegWrite { module: i, addr, value } => match module(i) {
            None => bad_module(i),
            Some(md) => reg_reply(md.write(addr, value)),
        },
        Message::BulkWrite { target: BulkTarget::GenomeCache, key, data, .. } => {
            let mut cache = inner.cache.lock().unwrap();
            if cache.get(key).is_some() {
                return Message::Ack;
            }
            match Genome::from_bytes(key, &data) {
                Ok(g) => {
                    cache.insert(Arc::new(g));
                    Message::Ack
                }
                Err(e) => Message::error(RegError::BadPayload.code(), e.to_string()),
            }
        }
        Message::BulkWrite { module: i, target, offset, data, .. } => match module(i) {
            None => bad_module(i),
            Some(md) => {
                let base = if target == BulkTarget::Param { PARAM_WINDOW } else { ROM_WINDOW };
                match base.checked_add(offset) {
                    Some(addr) => reg_reply(md.write_bytes(addr, &data)),
                    None => Message::error(RegError::OutOfRange.code(), "offset overflows the window"),
                }
            }
        },
        Message::StartJob { module: i, genome_id, game_id, frame_cap, seed } => {
            let Some(md) = module(i) else { return bad_module(i) };
            let Some(genome) = inner.cache.lock().unwrap().get(genome_id) else {
                return Message::error(ERR_UNKNOWN_GENOME, format!("genome {genome_id} not cached"));
            };
            reg_reply(start_job(md, genome, game_id, frame_cap, seed))
        }
        Message::Poll { module: i } => match module(i) {
            None => bad_module(i),
            Some(md) => {
                let r = md.registers();
                Message::Status(ModuleStatus {
                    module: i,
                    status: r.status,
                    score: r.score,
                    frame_count: r.frame_count,
                    clock_count: r.clock_count,
                    genome_id: r.genome_id,
                    eval_seed: md.eval_seed(),
                })
            }
        },
        other => Message::error(ERR_UNEXPECTED, format!("unexpected message type {}", other.type_code())),
    }
}

/// The register sequence a gateway would otherwise send one by one.
fn start_job(md: &EvalModule, genome: Arc<Genome>, game_id: u32, frame_cap: u32, seed: u64) -> Result<(), RegError> {
    if md.status() != Status::Idle {
        md.write(REG_COMMAND, u64::from(CMD_RESET))?;
    }
    md.load_genome(genome)?;
    md.write(REG_GAME_ID, u64::from(game_id))?;
    md.write(REG_FRAME_CAP, u64::from(frame_cap))?;
    md.write_bytes(ROM_WINDOW, &seed.to_le_bytes())?;
    md.write(REG_COMMAND, u64::from(CMD_START))
}
