//! Wire format: length-prefixed little-endian frames over TCP.
//!
//! ```text
//! magic "INCF" | u8 version | u8 type | u32 payload length | payload
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::evalmod::{FitnessRecord, Status, Termination};

pub const MAGIC: [u8; 4] = *b"INCF";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;
/// Largest accepted payload.
pub const MAX_PAYLOAD: u32 = 64 << 20;

/// HELLO flag: the client wants RESULT frames pushed as episodes finish.
pub const HELLO_PUSH: u32 = 1;

/// Farm-level error codes; register errors use their own codes (1..=8).
pub const ERR_UNKNOWN_GENOME: u16 = 100;
pub const ERR_BAD_MODULE: u16 = 101;
pub const ERR_MALFORMED: u16 = 102;
pub const ERR_UNEXPECTED: u16 = 103;

pub mod msg_type {
    pub const HELLO: u8 = 1;
    pub const REG_READ: u8 = 2;
    pub const REG_WRITE: u8 = 3;
    pub const BULK_WRITE: u8 = 4;
    pub const START_JOB: u8 = 5;
    pub const POLL: u8 = 6;
    pub const RESULT: u8 = 7;
    pub const ERROR: u8 = 8;
    pub const ACK: u8 = 9;
    pub const REG_VALUE: u8 = 10;
    pub const STATUS: u8 = 11;
}

/// Target of a BULK_WRITE.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BulkTarget {
    /// A module's parameter window.
    Param,
    /// A module's ROM window.
    Rom,
    /// The worker's genome cache; `key` is the genome id and the data a whole
    /// GNOM file.
    GenomeCache,
}

impl BulkTarget {
    fn code(self) -> u8 {
        match self {
            BulkTarget::Param => 0,
            BulkTarget::Rom => 1,
            BulkTarget::GenomeCache => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => BulkTarget::Param,
            1 => BulkTarget::Rom,
            2 => BulkTarget::GenomeCache,
            _ => return None,
        })
    }
}

/// POLL reply: every readable register of one module plus the seed of the
/// episode it last ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModuleStatus {
    pub module: u16,
    pub status: Status,
    pub score: i32,
    pub frame_count: u32,
    pub clock_count: u64,
    pub genome_id: u64,
    pub eval_seed: u64,
}

impl ModuleStatus {
    /// The finished episode's record, if the module is done with one.
    pub fn record(&self) -> Option<FitnessRecord> {
        let termination = match self.status {
            Status::DoneDead => Termination::Dead,
            Status::DoneTimeout => Termination::Timeout,
            Status::DoneStopped => Termination::Stopped,
            _ => return None,
        };
        Some(FitnessRecord {
            genome_id: self.genome_id,
            score: self.score,
            frames: self.frame_count,
            termination,
            eval_seed: self.eval_seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Hello { flags: u32, module_count: u16 },
    RegRead { module: u16, addr: u32 },
    RegWrite { module: u16, addr: u32, value: u64 },
    BulkWrite { module: u16, target: BulkTarget, key: u64, offset: u32, data: Vec<u8> },
    StartJob { module: u16, genome_id: u64, game_id: u32, frame_cap: u32, seed: u64 },
    Poll { module: u16 },
    Result { module: u16, record: FitnessRecord },
    Error { code: u16, message: String },
    Ack,
    RegValue { value: u64 },
    Status(ModuleStatus),
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("payload of {0} bytes exceeds the limit")]
    TooLarge(u32),
    #[error("malformed payload: {0}")]
    Malformed(&'static str),
}

impl ProtocolError {
    /// Whether the peer closed the connection cleanly.
    pub fn is_eof(&self) -> bool {
        matches!(self, ProtocolError::Io(e) if e.kind() == io::ErrorKind::UnexpectedEof)
    }
}

impl Message {
    pub fn type_code(&self) -> u8 {
        use msg_type::*;
        match self {
            Message::Hello { .. } => HELLO,
            Message::RegRead { .. } => REG_READ,
            Message::RegWrite { .. } => REG_WRITE,
            Message::BulkWrite { .. } => BULK_WRITE,
            Message::StartJob { .. } => START_JOB,
            Message::Poll { .. } => POLL,
            Message::Result { .. } => RESULT,
            Message::Error { .. } => ERROR,
            Message::Ack => ACK,
            Message::RegValue { .. } => REG_VALUE,
            Message::Status(_) => STATUS,
        }
    }

    pub fn error(code: u16, message: impl Into<String>) -> Self {
        Message::Error { code, message: message.into() }
    }

    fn encode_payload(&self, out: &mut Vec<u8>) {
        match self {
            Message::Hello { flags, module_count } => {
                put_u32(out, *flags);
                put_u16(out, *module_count);
            }
            Message::RegRead { module, addr } => {
                put_u16(out, *module);
                put_u32(out, *addr);
            }
            Message::RegWrite { module, addr, value } => {
                put_u16(out, *module);
                put_u32(out, *addr);
                put_u64(out, *value);
            }
            Message::BulkWrite { module, target, key, offset, data } => {
                put_u16(out, *module);
                out.push(target.code());
                put_u64(out, *key);
                put_u32(out, *offset);
                put_u32(out, data.len() as u32);
                out.extend_from_slice(data);
            }
            Message::StartJob { module, genome_id, game_id, frame_cap, seed } => {
                put_u16(out, *module);
                put_u64(out, *genome_id);
                put_u32(out, *game_id);
                put_u32(out, *frame_cap);
                put_u64(out, *seed);
            }
            Message::Poll { module } => put_u16(out, *module),
            Message::Result { module, record } => {
                put_u16(out, *module);
                put_u64(out, record.genome_id);
                put_u32(out, record.score as u32);
                put_u32(out, record.frames);
                out.push(termination_code(record.termination));
                put_u64(out, record.eval_seed);
            }
            Message::Error { code, message } => {
                put_u16(out, *code);
                put_u32(out, message.len() as u32);
                out.extend_from_slice(message.as_bytes());
            }
            Message::Ack => {}
            Message::RegValue { value } => put_u64(out, *value),
            Message::Status(s) => {
                put_u16(out, s.module);
                put_u32(out, s.status as u32);
                put_u32(out, s.score as u32);
                put_u32(out, s.frame_count);
                put_u64(out, s.clock_count);
                put_u64(out, s.genome_id);
                put_u64(out, s.eval_seed);
            }
        }
    }

    /// Full frame: header plus payload.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 32);
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.type_code());
        put_u32(&mut out, 0);
        self.encode_payload(&mut out);
        let len = (out.len() - HEADER_LEN) as u32;
        out[6..10].copy_from_slice(&len.to_le_bytes());
        out
    }

    pub fn decode_payload(ty: u8, payload: &[u8]) -> Result<Self, ProtocolError> {
        use msg_type::*;
        let mut r = Cursor { buf: payload, pos: 0 };
        let m = match ty {
            HELLO => Message::Hello { flags: r.u32()?, module_count: r.u16()? },
            REG_READ => Message::RegRead { module: r.u16()?, addr: r.u32()? },
            REG_WRITE => Message::RegWrite { module: r.u16()?, addr: r.u32()?, value: r.u64()? },
            BULK_WRITE => {
                let module = r.u16()?;
                let target = BulkTarget::from_code(r.u8()?).ok_or(ProtocolError::Malformed("bulk target"))?;
                let key = r.u64()?;
                let offset = r.u32()?;
                let len = r.u32()? as usize;
                let data = r.take(len)?.to_vec();
                Message::BulkWrite { module, target, key, offset, data }
            }
            START_JOB => Message::StartJob {
                module: r.u16()?,
                genome_id: r.u64()?,
                game_id: r.u32()?,
                frame_cap: r.u32()?,
                seed: r.u64()?,
            },
            POLL => Message::Poll { module: r.u16()? },
            RESULT => {
                let module = r.u16()?;
                let genome_id = r.u64()?;
                let score = r.u32()? as i32;
                let frames = r.u32()?;
                let termination = termination_from(r.u8()?).ok_or(ProtocolError::Malformed("termination"))?;
                let eval_seed = r.u64()?;
                Message::Result { module, record: FitnessRecord { genome_id, score, frames, termination, eval_seed } }
            }
            ERROR => {
                let code = r.u16()?;
                let len = r.u32()? as usize;
                let message = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| ProtocolError::Malformed("utf-8"))?;
                Message::Error { code, message }
            }
            ACK => Message::Ack,
            REG_VALUE => Message::RegValue { value: r.u64()? },
            STATUS => Message::Status(ModuleStatus {
                module: r.u16()?,
                status: Status::from_u32(r.u32()?).ok_or(ProtocolError::Malformed("status"))?,
                score: r.u32()? as i32,
                frame_count: r.u32()?,
                clock_count: r.u64()?,
                genome_id: r.u64()?,
                eval_seed: r.u64()?,
            }),
            other => return Err(ProtocolError::UnknownType(other)),
        };
        if r.pos != payload.len() {
            return Err(ProtocolError::Malformed("trailing bytes"));
        }
        Ok(m)
    }

    /// Decodes one complete frame.
    pub fn decode(frame: &[u8]) -> Result<Self, ProtocolError> {
        if frame.len() < HEADER_LEN {
            return Err(ProtocolError::Malformed("short header"));
        }
        let (ty, len) = parse_header(frame[..HEADER_LEN].try_into().unwrap())?;
        if frame.len() - HEADER_LEN != len as usize {
            return Err(ProtocolError::Malformed("length mismatch"));
        }
        Self::decode_payload(ty, &frame[HEADER_LEN..])
    }
}

fn parse_header(h: &[u8; HEADER_LEN]) -> Result<(u8, u32), ProtocolError> {
    let magic: [u8; 4] = h[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(ProtocolError::BadMagic(magic));
    }
    if h[4] != VERSION {
        return Err(ProtocolError::BadVersion(h[4]));
    }
    let len = u32::from_le_bytes(h[6..10].try_into().unwrap());
    if len > MAX_PAYLOAD {
        return Err(ProtocolError::TooLarge(len));
    }
    Ok((h[5], len))
}

/// Writes one frame; returns the number of bytes sent.
pub fn write_message(w: &mut impl Write, m: &Message) -> io::Result<usize> {
    let bytes = m.encode();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(bytes.len())
}

/// Reads one frame; returns the message and the number of bytes consumed.
pub fn read_message(r: &mut impl Read) -> Result<(Message, usize), ProtocolError> {
    let mut h = [0u8; HEADER_LEN];
    r.read_exact(&mut h)?;
    let (ty, len) = parse_header(&h)?;
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)?;
    Ok((Message::decode_payload(ty, &payload)?, HEADER_LEN + len as usize))
}

fn termination_code(t: Termination) -> u8 {
    match t {
        Termination::Dead => 0,
        Termination::Timeout => 1,
        Termination::Stopped => 2,
    }
}

fn termination_from(c: u8) -> Option<Termination> {
    Some(match c {
        0 => Termination::Dead,
        1 => Termination::Timeout,
        2 => Termination::Stopped,
        _ => return None,
    })
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or(ProtocolError::Malformed("truncated payload"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ProtocolError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ProtocolError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ProtocolError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ProtocolError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
