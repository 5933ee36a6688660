use rand::Rng;

use crate::policy::ActionId;
use crate::preproc::{FrameBuffer, FRAME_HEIGHT, FRAME_WIDTH};
use crate::rng::{self, Domain};

use super::{check_step, EnvDescriptor, EnvError, Environment};

/// Tunables for the Catch toy game.
#[derive(Debug, Clone, PartialEq)]
pub struct CatchParams {
    pub paddle_width: i32,
    pub paddle_height: i32,
    pub paddle_y: i32,
    pub paddle_speed: i32,
    pub object_width: i32,
    pub object_height: i32,
    pub spawn_y: i32,
    pub fall_speed: i32,
    pub max_misses: u32,
    pub background: u8,
    pub paddle_color: u8,
    pub object_color: u8,
}

impl Default for CatchParams {
    fn default() -> Self {
        CatchParams {
            paddle_width: 24,
            paddle_height: 4,
            paddle_y: 190,
            paddle_speed: 4,
            object_width: 8,
            object_height: 6,
            spawn_y: 20,
            fall_speed: 4,
            max_misses: 10,
            background: 0,
            paddle_color: 7,
            object_color: 30,
        }
    }
}

/// A paddle under a falling object. Right-moving joystick actions push the
/// paddle right, left-moving ones push it left, everything else holds.
/// +1 per catch; the game ends after `max_misses` drops.
#[derive(Debug, Clone)]
pub struct Catch {
    desc: EnvDescriptor,
    params: CatchParams,
    seed: u64,
    frame: FrameBuffer,
    paddle_x: i32,
    object_x: i32,
    object_y: i32,
    drops: u64,
    score: i32,
    misses: u32,
    frame_index: u32,
    alive: bool,
}

/// Joystick direction of an action id: -1 left, +1 right, 0 none.
pub(crate) fn horizontal(action: ActionId) -> i32 {
    match action {
        3 | 6 | 8 | 11 | 14 | 16 => 1,
        4 | 7 | 9 | 12 | 15 | 17 => -1,
        _ => 0,
    }
}

impl Catch {
    pub fn new(desc: EnvDescriptor, params: CatchParams, seed: u64) -> Self {
        let paddle_x = (FRAME_WIDTH as i32 - params.paddle_width) / 2;
        let mut c = Catch {
            desc,
            frame: FrameBuffer::filled(params.background),
            params,
            seed,
            paddle_x,
            object_x: 0,
            object_y: 0,
            drops: 0,
            score: 0,
            misses: 0,
            frame_index: 0,
            alive: true,
        };
        c.spawn();
        c.render();
        c
    }

    fn spawn(&mut self) {
        let max_x = FRAME_WIDTH as i32 - self.params.object_width;
        self.object_x = rng::stream(self.seed, Domain::EnvSpawn, self.drops).random_range(0..=max_x);
        self.object_y = self.params.spawn_y;
        self.drops += 1;
    }

    fn render(&mut self) {
        let p = &self.params;
        self.frame.fill(p.background);
        self.frame.fill_rect(self.paddle_x, p.paddle_y, p.paddle_width, p.paddle_height, p.paddle_color);
        self.frame.fill_rect(self.object_x, self.object_y, p.object_width, p.object_height, p.object_color);
    }

    pub fn paddle_x(&self) -> i32 {
        self.paddle_x
    }

    pub fn object_x(&self) -> i32 {
        self.object_x
    }

    pub fn object_y(&self) -> i32 {
        self.object_y
    }

    pub fn misses(&self) -> u32 {
        self.misses
    }

    /// Current frame without stepping.
    pub fn frame(&self) -> &FrameBuffer {
        &self.frame
    }
}

impl Environment for Catch {
    fn step(&mut self, action: ActionId) -> Result<&FrameBuffer, EnvError> {
        check_step(&self.desc, self.alive, self.frame_index, action)?;
        let p = &self.params;
        let max_paddle = FRAME_WIDTH as i32 - p.paddle_width;
        self.paddle_x = (self.paddle_x + horizontal(action) * p.paddle_speed).clamp(0, max_paddle);
        self.object_y += p.fall_speed;
        if self.object_y + p.object_height >= p.paddle_y {
            let overlap = self.object_x < self.paddle_x + p.paddle_width
                && self.paddle_x < self.object_x + p.object_width;
            if overlap {
                self.score += 1;
            } else {
                self.misses += 1;
                if self.misses >= p.max_misses {
                    self.alive = false;
                }
            }
            self.spawn();
        }
        debug_assert!(self.object_y + self.params.object_height <= FRAME_HEIGHT as i32);
        self.frame_index += 1;
        self.render();
        Ok(&self.frame)
    }

    fn score(&self) -> i32 {
        self.score
    }

    fn alive(&self) -> bool {
        self.alive
    }

    fn frame_index(&self) -> u32 {
        self.frame_index
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn game(seed: u64) -> Catch {
        Catch::new(EnvDescriptor::default(), CatchParams::default(), seed)
    }

    /// Steers toward the object's center.
    fn tracker(c: &Catch) -> ActionId {
        let p = CatchParams::default();
        let target = c.object_x() + p.object_width / 2 - p.paddle_width / 2;
        match target.cmp(&c.paddle_x()) {
            std::cmp::Ordering::Greater => 3,
            std::cmp::Ordering::Less => 4,
            std::cmp::Ordering::Equal => 0,
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let (mut a, mut b, mut c) = (game(5), game(5), game(6));
        let mut differ = false;
        for i in 0..300 {
            let act = (i % 18) as u8;
            let fa = a.step(act).unwrap().clone();
            assert_eq!(&fa, b.step(act).unwrap());
            differ |= &fa != c.step(act).unwrap();
        }
        assert!(differ);
    }

    #[test]
    fn tracking_policy_catches_everything() {
        let mut c = game(11);
        let mut last = 0;
        for _ in 0..2000 {
            let a = tracker(&c);
            c.step(a).unwrap();
            assert!(c.score() == last || c.score() == last + 1);
            last = c.score();
        }
        assert_eq!(c.misses(), 0);
        // one drop per (190 - 6 - 20) / 4 = 41 frames
        assert_eq!(c.score(), 2000 / 41);
    }

    #[test]
    fn noop_forever_dies_before_cap() {
        let mut c = game(3);
        while c.alive() {
            c.step(0).unwrap();
        }
        assert!(c.frame_index() <= EnvDescriptor::default().frame_cap);
        assert_eq!(c.misses(), 10);
        assert_eq!(c.step(0), Err(EnvError::StepAfterDead));
    }

    #[test]
    fn pixels_stay_in_palette() {
        let mut c = game(1);
        for i in 0..200 {
            assert!(c.step((i % 18) as u8).unwrap().pixels().iter().all(|&p| p < 128));
        }
    }

    #[test]
    fn cap_and_action_checks() {
        let desc = EnvDescriptor::default().with_frame_cap(3);
        let mut c = Catch::new(desc, CatchParams::default(), 0);
        assert_eq!(c.step(18).unwrap_err(), EnvError::InvalidAction(18));
        for _ in 0..3 {
            c.step(0).unwrap();
        }
        assert_eq!(c.step(0).unwrap_err(), EnvError::FrameCapExceeded(3));
    }
}
