//! Frame pre-processing: palette to luma, two-frame max pooling, bilinear
//! downscale to 84x84 and 4-frame stacking.
//!
//! Everything here is integer arithmetic so the pipeline output is bit-exact
//! on every platform.

mod palette;
mod rescale;

pub use palette::{bt601_luma, Palette, PALETTE_SIZE};
pub use rescale::{rescale, rescale_taps, Tap};

use std::collections::VecDeque;

use crate::error::Error;
use crate::fixedpoint::{shift_round_even, QFormat};
use crate::tensor::QTensor;

pub const FRAME_WIDTH: usize = 160;
pub const FRAME_HEIGHT: usize = 210;
pub const FRAME_PIXELS: usize = FRAME_WIDTH * FRAME_HEIGHT;
pub const SCALED_SIZE: usize = 84;
pub const SCALED_PIXELS: usize = SCALED_SIZE * SCALED_SIZE;
pub const STACK_DEPTH: usize = 4;

/// A 160x210 frame of 7-bit palette indices, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct FrameBuffer {
    pixels: Vec<u8>,
}

impl std::fmt::Debug for FrameBuffer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FrameBuffer").field("len", &self.pixels.len()).finish()
    }
}

impl FrameBuffer {
    pub fn filled(index: u8) -> Self {
        assert!(index < 128, "palette index {index} out of range");
        FrameBuffer { pixels: vec![index; FRAME_PIXELS] }
    }

    pub fn from_pixels(pixels: Vec<u8>) -> Result<Self, Error> {
        if pixels.len() != FRAME_PIXELS {
            return Err(Error::format(format!(
                "frame has {} pixels, expected {FRAME_PIXELS}",
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().position(|&v| v >= 128) {
            return Err(Error::format(format!("pixel {p} has palette index {} >= 128", pixels[p])));
        }
        Ok(FrameBuffer { pixels })
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn fill(&mut self, index: u8) {
        assert!(index < 128);
        self.pixels.fill(index);
    }

    /// Fills the rectangle clipped to the frame.
    pub fn fill_rect(&mut self, x: i32, y: i32, w: i32, h: i32, index: u8) {
        assert!(index < 128);
        let x0 = x.clamp(0, FRAME_WIDTH as i32) as usize;
        let x1 = (x + w).clamp(0, FRAME_WIDTH as i32) as usize;
        let y0 = y.clamp(0, FRAME_HEIGHT as i32) as usize;
        let y1 = (y + h).clamp(0, FRAME_HEIGHT as i32) as usize;
        if x0 >= x1 {
            return;
        }
        for row in y0..y1 {
            self.pixels[row * FRAME_WIDTH + x0..row * FRAME_WIDTH + x1].fill(index);
        }
    }
}

/// A 160x210 luminance frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LumaFrame {
    pixels: Vec<u8>,
}

impl LumaFrame {
    pub fn from_pixels(pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), FRAME_PIXELS);
        LumaFrame { pixels }
    }

    pub fn filled(v: u8) -> Self {
        LumaFrame { pixels: vec![v; FRAME_PIXELS] }
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * FRAME_WIDTH + x]
    }
}

/// An 84x84 luminance frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScaledFrame {
    pixels: Vec<u8>,
}

impl ScaledFrame {
    pub fn from_pixels(pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), SCALED_PIXELS);
        ScaledFrame { pixels }
    }

    pub fn filled(v: u8) -> Self {
        ScaledFrame { pixels: vec![v; SCALED_PIXELS] }
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * SCALED_SIZE + x]
    }
}

/// Four scaled frames, oldest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StackedInput {
    pub channels: [ScaledFrame; STACK_DEPTH],
}

/// Converts palette indices to BT.601 luma.
pub fn to_luma(frame: &FrameBuffer, palette: &Palette) -> LumaFrame {
    to_luma_with(frame, &palette.luma_table())
}

/// [`to_luma`] with a precomputed lookup table.
pub fn to_luma_with(frame: &FrameBuffer, lut: &[u8; PALETTE_SIZE]) -> LumaFrame {
    LumaFrame { pixels: frame.pixels.iter().map(|&i| lut[usize::from(i & 0x7F)]).collect() }
}

/// Per-pixel maximum of two frames.
pub fn pool(prev: &LumaFrame, cur: &LumaFrame) -> LumaFrame {
    LumaFrame { pixels: prev.pixels.iter().zip(&cur.pixels).map(|(&a, &b)| a.max(b)).collect() }
}

/// Sliding window over the last four scaled frames.
#[derive(Debug, Clone, Default)]
pub struct FrameStack {
    frames: VecDeque<ScaledFrame>,
}

impl FrameStack {
    pub fn new() -> Self {
        FrameStack { frames: VecDeque::with_capacity(STACK_DEPTH) }
    }

    pub fn push(&mut self, frame: ScaledFrame) {
        if self.frames.len() == STACK_DEPTH {
            self.frames.pop_front();
        }
        self.frames.push_back(frame);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn clear(&mut self) {
        self.frames.clear();
    }

    /// The current stack; `None` before the first frame.
    pub fn stacked(&self) -> Option<StackedInput> {
        let frames: Vec<&ScaledFrame> = self.frames.iter().collect();
        stack(&frames)
    }
}

/// Builds a stack from up to four frames (oldest first), padding a short
/// history by repeating its oldest frame.
pub fn stack(history: &[&ScaledFrame]) -> Option<StackedInput> {
    let first = *history.first()?;
    let history = &history[history.len().saturating_sub(STACK_DEPTH)..];
    let pad = STACK_DEPTH - history.len();
    let channels = std::array::from_fn(|c| {
        if c < pad {
            first.clone()
        } else {
            history[c - pad].clone()
        }
    });
    Some(StackedInput { channels })
}

/// Maps pixel `v` to `quantize(v / 256)` in the activation format.
#[inline]
pub fn pixel_activation(v: u8) -> i16 {
    let shift = 8 - u32::from(QFormat::ACTIVATIONS.radix());
    shift_round_even(i64::from(v), shift) as i16
}

/// Stacked frames as an 84x84x4 activation tensor (channel c = c-th oldest).
pub fn to_activations(s: &StackedInput) -> QTensor {
    let mut t = QTensor::zeros(SCALED_SIZE, SCALED_SIZE, STACK_DEPTH);
    let data = t.data_mut();
    for (c, frame) in s.channels.iter().enumerate() {
        for (i, &v) in frame.pixels.iter().enumerate() {
            data[i * STACK_DEPTH + c] = pixel_activation(v);
        }
    }
    t
}

/// Per-episode pipeline state: previous luma frame and the 4-frame window.
#[derive(Debug, Clone)]
pub struct Pipeline {
    lut: [u8; PALETTE_SIZE],
    prev: Option<LumaFrame>,
    window: FrameStack,
}

impl Pipeline {
    pub fn new(palette: &Palette) -> Self {
        Pipeline { lut: palette.luma_table(), prev: None, window: FrameStack::new() }
    }

    pub fn reset(&mut self) {
        self.prev = None;
        self.window.clear();
    }

    /// Luma, pool with the previous frame (the first frame pools with itself),
    /// rescale and push into the window.
    pub fn push_frame(&mut self, frame: &FrameBuffer) {
        let luma = to_luma_with(frame, &self.lut);
        let pooled = match &self.prev {
            Some(prev) => pool(prev, &luma),
            None => luma.clone(),
        };
        self.window.push(rescale(&pooled));
        self.prev = Some(luma);
    }

    pub fn stacked(&self) -> Option<StackedInput> {
        self.window.stacked()
    }

    pub fn activations(&self) -> Option<QTensor> {
        self.stacked().map(|s| to_activations(&s))
    }
}
