//! Register map of an evaluation module. The same byte offsets are used
//! in-process and over the farm protocol.

use thiserror::Error;

pub const REG_GAME_ID: u32 = 0x00;
pub const REG_STATUS: u32 = 0x04;
pub const REG_SCORE: u32 = 0x08;
pub const REG_FRAME_COUNT: u32 = 0x0C;
pub const REG_CLOCK_COUNT: u32 = 0x10;
pub const REG_COMMAND: u32 = 0x18;
pub const REG_FRAME_CAP: u32 = 0x1C;
pub const REG_GENOME_ID: u32 = 0x20;

pub const PARAM_WINDOW: u32 = 0x0100_0000;
pub const ROM_WINDOW: u32 = 0x0200_0000;
/// Size of each byte window's address range.
pub const WINDOW_SPAN: u32 = 0x0100_0000;

pub const CMD_RESET: u32 = 1 << 0;
pub const CMD_START: u32 = 1 << 1;
pub const CMD_STOP: u32 = 1 << 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u32)]
pub enum Status {
    Idle = 0,
    Running = 1,
    DoneDead = 2,
    DoneTimeout = 3,
    DoneStopped = 4,
    /// The environment failed mid-episode; no fitness record.
    Fault = 5,
}

impl Status {
    pub fn from_u32(v: u32) -> Option<Status> {
        Some(match v {
            0 => Status::Idle,
            1 => Status::Running,
            2 => Status::DoneDead,
            3 => Status::DoneTimeout,
            4 => Status::DoneStopped,
            5 => Status::Fault,
            _ => return None,
        })
    }

    pub fn is_done(self) -> bool {
        !matches!(self, Status::Idle | Status::Running)
    }
}

/// Register access failures. The discriminant is the wire error code.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum RegError {
    #[error("no register at this address")]
    BadAddress = 1,
    #[error("register is read-only")]
    ReadOnly = 2,
    #[error("register is write-only")]
    WriteOnly = 3,
    #[error("command not allowed in the current state")]
    IllegalTransition = 4,
    #[error("module is running")]
    Busy = 5,
    #[error("uploaded payload is invalid")]
    BadPayload = 6,
    #[error("value out of range")]
    OutOfRange = 7,
    #[error("game not supported by this module")]
    Unsupported = 8,
}

impl RegError {
    pub fn code(self) -> u16 {
        self as u16
    }

    pub fn from_code(code: u16) -> Option<RegError> {
        Some(match code {
            1 => RegError::BadAddress,
            2 => RegError::ReadOnly,
            3 => RegError::WriteOnly,
            4 => RegError::IllegalTransition,
            5 => RegError::Busy,
            6 => RegError::BadPayload,
            7 => RegError::OutOfRange,
            8 => RegError::Unsupported,
            _ => return None,
        })
    }
}

/// Which byte window an address falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Param,
    Rom,
}

impl Window {
    pub fn base(self) -> u32 {
        match self {
            Window::Param => PARAM_WINDOW,
            Window::Rom => ROM_WINDOW,
        }
    }

    /// Splits a byte address into window and offset.
    pub fn locate(addr: u32) -> Option<(Window, u32)> {
        for w in [Window::Param, Window::Rom] {
            if (w.base()..w.base() + WINDOW_SPAN).contains(&addr) {
                return Some((w, addr - w.base()));
            }
        }
        None
    }
}

/// A consistent view of every readable register.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegisterFile {
    pub game_id: u32,
    pub status: Status,
    pub score: i32,
    pub frame_count: u32,
    pub clock_count: u64,
    pub frame_cap: u32,
    pub genome_id: u64,
}

impl RegisterFile {
    /// Value of the register at `addr`. Narrow registers are zero-extended;
    /// the score is returned as its 32-bit two's-complement pattern.
    pub fn read(&self, addr: u32) -> Result<u64, RegError> {
        Ok(match addr {
            REG_GAME_ID => u64::from(self.game_id),
            REG_STATUS => self.status as u64,
            REG_SCORE => u64::from(self.score as u32),
            REG_FRAME_COUNT => u64::from(self.frame_count),
            REG_CLOCK_COUNT => self.clock_count,
            REG_FRAME_CAP => u64::from(self.frame_cap),
            REG_GENOME_ID => self.genome_id,
            REG_COMMAND => return Err(RegError::WriteOnly),
            a if Window::locate(a).is_some() => return Err(RegError::WriteOnly),
            _ => return Err(RegError::BadAddress),
        })
    }
}

/// Score register value back to a signed score.
pub fn score_from_reg(v: u64) -> i32 {
    v as u32 as i32
}
