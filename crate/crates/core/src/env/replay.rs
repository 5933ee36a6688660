use std::path::Path;
use std::sync::Arc;

use crate::policy::ActionId;
use crate::preproc::{FrameBuffer, FRAME_PIXELS};

use super::{check_step, EnvDescriptor, EnvError, Environment};

pub const FIXTURE_MAGIC: [u8; 4] = *b"AFRM";
pub const FIXTURE_VERSION: u16 = 1;
pub const FIXTURE_HEADER_LEN: usize = 16;
/// Header flag: a per-frame score track follows the frames.
const FLAG_SCORES: u16 = 1;

/// Recorded console frames plus an optional per-frame cumulative score.
///
/// Layout: magic `AFRM`, u16 version, u16 flags, u32 frame count, u32
/// reserved, then `count` frames of 160x210 palette indices, then (flag bit
/// 0) `count` little-endian i32 scores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayFixture {
    frames: Vec<FrameBuffer>,
    scores: Vec<i32>,
}

impl ReplayFixture {
    /// # Panics
    /// If `scores` is non-empty and its length differs from `frames`.
    pub fn new(frames: Vec<FrameBuffer>, scores: Vec<i32>) -> Self {
        assert!(scores.is_empty() || scores.len() == frames.len(), "score track length");
        ReplayFixture { frames, scores }
    }

    pub fn frames(&self) -> &[FrameBuffer] {
        &self.frames
    }

    /// Cumulative score after frame `k`; zero without a score track.
    pub fn score_at(&self, k: usize) -> i32 {
        self.scores.get(k).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let flags = if self.scores.is_empty() { 0 } else { FLAG_SCORES };
        let mut out = Vec::with_capacity(FIXTURE_HEADER_LEN + self.frames.len() * (FRAME_PIXELS + 4));
        out.extend_from_slice(&FIXTURE_MAGIC);
        out.extend_from_slice(&FIXTURE_VERSION.to_le_bytes());
        out.extend_from_slice(&flags.to_le_bytes());
        out.extend_from_slice(&(self.frames.len() as u32).to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for f in &self.frames {
            out.extend_from_slice(f.pixels());
        }
        for s in &self.scores {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EnvError> {
        let bad = |m: String| EnvError::Fixture(m);
        if bytes.len() < FIXTURE_HEADER_LEN {
            return Err(bad("shorter than its header".into()));
        }
        if bytes[0..4] != FIXTURE_MAGIC {
            return Err(bad("bad magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FIXTURE_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let flags = u16::from_le_bytes([bytes[6], bytes[7]]);
        let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let track = if flags & FLAG_SCORES != 0 { 4 * count } else { 0 };
        let body = &bytes[FIXTURE_HEADER_LEN..];
        let need = count * FRAME_PIXELS + track;
        if body.len() < need {
            return Err(bad(format!("truncated: {count} frames need {need} bytes, found {}", body.len())));
        }
        if body.len() > need {
            return Err(bad(format!("{} trailing bytes", body.len() - need)));
        }
        let (pix, score_bytes) = body.split_at(count * FRAME_PIXELS);
        let frames = pix
            .chunks_exact(FRAME_PIXELS)
            .map(|c| FrameBuffer::from_pixels(c.to_vec()).map_err(|e| bad(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let scores = score_bytes.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(ReplayFixture { frames, scores })
    }

    pub fn load(path: &Path) -> Result<Self, crate::error::Error> {
        Ok(Self::from_bytes(&std::fs::read(path)?)?)
    }
}

/// Plays a fixture back verbatim, ignoring actions. Dead after the last
/// frame.
#[derive(Debug, Clone)]
pub struct Replay {
    desc: EnvDescriptor,
    fixture: Arc<ReplayFixture>,
    next: usize,
}

impl Replay {
    pub fn new(desc: EnvDescriptor, fixture: Arc<ReplayFixture>) -> Self {
        Replay { desc, fixture, next: 0 }
    }
}

impl Environment for Replay {
    fn step(&mut self, action: ActionId) -> Result<&FrameBuffer, EnvError> {
        check_step(&self.desc, self.alive(), self.next as u32, action)?;
        self.next += 1;
        Ok(&self.fixture.frames[self.next - 1])
    }

    fn score(&self) -> i32 {
        match self.next {
            0 => 0,
            n => self.fixture.score_at(n - 1),
        }
    }

    fn alive(&self) -> bool {
        self.next < self.fixture.len()
    }

    fn frame_index(&self) -> u32 {
        self.next as u32
    }
}
