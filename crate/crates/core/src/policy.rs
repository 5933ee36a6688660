//! Action selection: argmax over the network outputs, held for four frames,
//! with per-frame sticky actions driven by a maximal-length LFSR.

use thiserror::Error;

use crate::fixedpoint::QValue;
use crate::network::ACTION_COUNT;

pub type ActionId = u8;

/// Default sticky probability.
pub const DEFAULT_STICKINESS: f64 = 0.25;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LfsrError {
    #[error("LFSR state must be nonzero")]
    ZeroState,
    #[error("invalid LFSR width {0} (need 2..=64)")]
    BadWidth(u8),
    #[error("tap {tap} out of range for width {width}")]
    BadTap { tap: u8, width: u8 },
}

/// Fibonacci LFSR shifting right. Tap `t` (1-based, as in polynomial tables)
/// reads bit `width - t`; the output is the bit shifted out of position 0 and
/// the feedback enters at the top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lfsr {
    state: u64,
    width: u8,
    shifts: Vec<u8>,
}

impl Lfsr {
    pub fn new(width: u8, taps: &[u8], seed: u64) -> Result<Self, LfsrError> {
        if !(2..=64).contains(&width) {
            return Err(LfsrError::BadWidth(width));
        }
        let mut shifts = Vec::with_capacity(taps.len());
        for &tap in taps {
            if tap == 0 || tap > width {
                return Err(LfsrError::BadTap { tap, width });
            }
            shifts.push(width - tap);
        }
        let state = seed & mask(width);
        if state == 0 {
            return Err(LfsrError::ZeroState);
        }
        Ok(Lfsr { state, width, shifts })
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn width(&self) -> u8 {
        self.width
    }

    /// One step; returns the output bit.
    #[inline]
    pub fn next_bit(&mut self) -> u8 {
        let out = (self.state & 1) as u8;
        let fb = self.shifts.iter().fold(0u64, |acc, &s| acc ^ (self.state >> s)) & 1;
        self.state = (self.state >> 1) | (fb << (self.width - 1));
        out
    }
}

fn mask(width: u8) -> u64 {
    if width == 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// The 41-bit generator (taps 41, 38) that drives sticky actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lfsr41(Lfsr);

impl Lfsr41 {
    pub const WIDTH: u8 = 41;
    pub const TAPS: [u8; 2] = [41, 38];

    /// Only the low 41 bits of `seed` are used; they must not all be zero.
    pub fn new(seed: u64) -> Result<Self, LfsrError> {
        Lfsr::new(Self::WIDTH, &Self::TAPS, seed).map(Lfsr41)
    }

    /// Seeds from an arbitrary 64-bit value, remapping an all-zero low part.
    pub fn from_seed(seed: u64) -> Self {
        let s = seed & mask(Self::WIDTH);
        Self::new(if s == 0 { 1 } else { s }).expect("nonzero")
    }

    pub fn state(&self) -> u64 {
        self.0.state
    }

    #[inline]
    pub fn next_bit(&mut self) -> u8 {
        self.0.next_bit()
    }

    /// Sixteen output bits, MSB first, as a raw value in `0..65536`.
    pub fn draw_u16(&mut self) -> u16 {
        (0..16).fold(0u16, |acc, _| (acc << 1) | u16::from(self.next_bit()))
    }

    /// A fraction in `[0, 1)` with 16-bit resolution.
    pub fn draw_uniform(&mut self) -> f64 {
        f64::from(self.draw_u16()) / 65536.0
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(q: &[QValue]) -> ActionId {
    let mut best = 0;
    for (i, v) in q.iter().enumerate().skip(1) {
        if v.raw() > q[best].raw() {
            best = i;
        }
    }
    best as ActionId
}

/// Per-episode policy state.
///
/// At episode start there is no previous action: the first frame emits the
/// pending action, but still consumes one draw so the random stream stays
/// aligned with the frame counter.
#[derive(Debug, Clone)]
pub struct PolicyState {
    stickiness: f64,
    threshold: u32,
    pending: ActionId,
    previous: Option<ActionId>,
    rng: Lfsr41,
}

impl PolicyState {
    /// # Panics
    /// If `stickiness` is outside `[0, 1)`.
    pub fn new(stickiness: f64, rng: Lfsr41) -> Self {
        assert!((0.0..1.0).contains(&stickiness), "stickiness must be in [0, 1)");
        let threshold = (stickiness * 65536.0).round() as u32;
        PolicyState { stickiness, threshold, pending: 0, previous: None, rng }
    }

    pub fn stickiness(&self) -> f64 {
        self.stickiness
    }

    pub fn pending(&self) -> ActionId {
        self.pending
    }

    pub fn previous(&self) -> Option<ActionId> {
        self.previous
    }

    /// Picks the argmax of `q` as the pending action.
    pub fn select_action(&mut self, q: &[QValue]) -> ActionId {
        debug_assert_eq!(q.len(), ACTION_COUNT);
        self.pending = argmax(q);
        self.pending
    }

    /// Per-frame emission: keep the previous action when the draw falls
    /// below the stickiness, otherwise emit the pending one.
    pub fn apply_sticky(&mut self) -> ActionId {
        let sticky = u32::from(self.rng.draw_u16()) < self.threshold;
        let emitted = match self.previous {
            Some(prev) if sticky => prev,
            _ => self.pending,
        };
        self.previous = Some(emitted);
        emitted
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixedpoint::{QFormat, QValue};

    fn q(raws: &[i32]) -> Vec<QValue> {
        raws.iter().map(|&r| QValue::new(i64::from(r), QFormat::ACTIVATIONS).unwrap()).collect()
    }

    #[test]
    fn width8_is_maximal() {
        let mut l = Lfsr::new(8, &[8, 6, 5, 4], 1).unwrap();
        let mut seen = std::collections::HashSet::new();
        for _ in 0..255 {
            assert!(seen.insert(l.state()));
            l.next_bit();
        }
        assert_eq!(seen.len(), 255);
        assert_eq!(l.state(), 1);
    }

    #[test]
    fn lfsr41_leaves_seed_and_is_deterministic() {
        let mut a = Lfsr41::new(1).unwrap();
        let mut b = Lfsr41::new(1).unwrap();
        for _ in 0..256 {
            assert_eq!(a.next_bit(), b.next_bit());
        }
        assert_ne!(a.state(), 1);
    }

    #[test]
    fn zero_seed_rejected() {
        assert_eq!(Lfsr41::new(0), Err(LfsrError::ZeroState));
        assert_eq!(Lfsr41::new(1 << 41), Err(LfsrError::ZeroState));
        assert_eq!(Lfsr41::from_seed(1 << 41).state(), 1);
        assert!(Lfsr::new(8, &[9], 1).is_err());
    }

    #[test]
    fn draw_extremes() {
        // A state whose next 16 output bits are all zero or all one.
        let mut zeros = Lfsr41::new(1 << 40).unwrap();
        assert_eq!(zeros.draw_uniform(), 0.0);
        let mut ones = Lfsr41::new((1 << 41) - 1).unwrap();
        assert_eq!(ones.draw_uniform(), 65535.0 / 65536.0);
    }

    #[test]
    fn argmax_rules() {
        let mut v = vec![0; 18];
        v[7] = 5;
        assert_eq!(argmax(&q(&v)), 7);
        assert_eq!(argmax(&q(&[3; 18])), 0);
        v[12] = 5;
        assert_eq!(argmax(&q(&v)), 7);
    }

    #[test]
    fn zero_stickiness_always_pending() {
        let mut s = PolicyState::new(0.0, Lfsr41::new(99).unwrap());
        for i in 0..1000u32 {
            s.pending = (i % 18) as u8;
            assert_eq!(s.apply_sticky(), (i % 18) as u8);
        }
    }

    #[test]
    fn first_frame_emits_pending() {
        for seed in 1..200 {
            let mut s = PolicyState::new(0.99, Lfsr41::new(seed).unwrap());
            s.pending = 5;
            assert_eq!(s.apply_sticky(), 5);
        }
    }
}
