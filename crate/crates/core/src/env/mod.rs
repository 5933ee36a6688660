//! Environments standing in for the game console: seeded, frame-producing,
//! score-reporting state machines.

mod catch;
mod replay;

pub use catch::{Catch, CatchParams};
pub use replay::{Replay, ReplayFixture, FIXTURE_HEADER_LEN, FIXTURE_MAGIC, FIXTURE_VERSION};

use std::sync::Arc;

use thiserror::Error;

use crate::policy::ActionId;
use crate::preproc::FrameBuffer;

/// Frame cap in console frames: five minutes at 60 fps.
pub const DEFAULT_FRAME_CAP: u32 = 18_000;

pub const GAME_CATCH: u32 = 0;
pub const GAME_REPLAY: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnvError {
    #[error("unknown game id {0}")]
    UnknownGame(u32),
    #[error("step after the game ended")]
    StepAfterDead,
    #[error("step past the frame cap of {0}")]
    FrameCapExceeded(u32),
    #[error("action {0} outside the action set")]
    InvalidAction(ActionId),
    #[error("game {0} needs a replay fixture")]
    MissingFixture(u32),
    #[error("bad replay fixture: {0}")]
    Fixture(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvDescriptor {
    pub game_id: u32,
    pub action_count: u8,
    pub frame_cap: u32,
}

impl EnvDescriptor {
    pub fn new(game_id: u32) -> Self {
        EnvDescriptor { game_id, action_count: 18, frame_cap: DEFAULT_FRAME_CAP }
    }

    pub fn with_frame_cap(mut self, frame_cap: u32) -> Self {
        self.frame_cap = frame_cap;
        self
    }
}

impl Default for EnvDescriptor {
    fn default() -> Self {
        Self::new(GAME_CATCH)
    }
}

/// Per-process environment parameters that are not part of the descriptor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnvConfig {
    pub catch: CatchParams,
    /// Fixture used by the replay game when none is supplied per episode.
    pub replay: Option<Arc<ReplayFixture>>,
}

pub trait Environment: Send {
    /// Advances one console frame.
    fn step(&mut self, action: ActionId) -> Result<&FrameBuffer, EnvError>;
    /// Cumulative score so far.
    fn score(&self) -> i32;
    fn alive(&self) -> bool;
    /// Frames stepped since reset.
    fn frame_index(&self) -> u32;
}

/// Builds the environment for `desc` in its initial state.
pub fn reset(
    desc: &EnvDescriptor,
    seed: u64,
    config: &EnvConfig,
    fixture: Option<Arc<ReplayFixture>>,
) -> Result<Box<dyn Environment>, EnvError> {
    if desc.action_count == 0 || desc.action_count > 18 {
        return Err(EnvError::InvalidAction(desc.action_count));
    }
    match desc.game_id {
        GAME_CATCH => Ok(Box::new(Catch::new(*desc, config.catch.clone(), seed))),
        GAME_REPLAY => {
            let fixture = fixture
                .or_else(|| config.replay.clone())
                .ok_or(EnvError::MissingFixture(desc.game_id))?;
            Ok(Box::new(Replay::new(*desc, fixture)))
        }
        other => Err(EnvError::UnknownGame(other)),
    }
}

/// Shared bookkeeping for the frame cap and the action range.
fn check_step(desc: &EnvDescriptor, alive: bool, frame: u32, action: ActionId) -> Result<(), EnvError> {
    if !alive {
        return Err(EnvError::StepAfterDead);
    }
    if frame >= desc.frame_cap {
        return Err(EnvError::FrameCapExceeded(desc.frame_cap));
    }
    if action >= desc.action_count {
        return Err(EnvError::InvalidAction(action));
    }
    Ok(())
}
