use std::collections::BTreeSet;
use std::path::Path;

use crate::error::Error;

pub const PALETTE_SIZE: usize = 128;

const REFERENCE_NTSC: &str = include_str!("../../data/ntsc_palette.txt");

/// 128-entry console palette of 8-bit RGB triples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette {
    entries: [[u8; 3]; PALETTE_SIZE],
}

impl Palette {
    pub fn new(entries: [[u8; 3]; PALETTE_SIZE]) -> Self {
        Palette { entries }
    }

    /// The NTSC palette shipped in `data/ntsc_palette.txt`.
    pub fn reference_ntsc() -> Self {
        Self::parse(REFERENCE_NTSC).expect("shipped palette is well formed")
    }

    /// Parses 128 lines of `RR GG BB` hex. Blank lines and `#` comments are
    /// ignored.
    pub fn parse(text: &str) -> Result<Self, Error> {
        let mut entries = [[0u8; 3]; PALETTE_SIZE];
        let mut n = 0;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if n == PALETTE_SIZE {
                return Err(Error::format(format!("palette: more than {PALETTE_SIZE} entries")));
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::format(format!("palette line {}: expected `RR GG BB`", lineno + 1)));
            }
            for (k, f) in fields.iter().enumerate() {
                entries[n][k] = u8::from_str_radix(f, 16).map_err(|_| {
                    Error::format(format!("palette line {}: bad hex byte {f:?}", lineno + 1))
                })?;
            }
            n += 1;
        }
        if n != PALETTE_SIZE {
            return Err(Error::format(format!("palette: expected {PALETTE_SIZE} entries, got {n}")));
        }
        Ok(Palette { entries })
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|[r, g, b]| format!("{r:02X} {g:02X} {b:02X}\n")).collect()
    }

    pub fn entry(&self, index: u8) -> [u8; 3] {
        self.entries[usize::from(index)]
    }

    pub fn entries(&self) -> &[[u8; 3]; PALETTE_SIZE] {
        &self.entries
    }

    /// Per-index luma lookup table.
    pub fn luma_table(&self) -> [u8; PALETTE_SIZE] {
        let mut lut = [0u8; PALETTE_SIZE];
        for (dst, rgb) in lut.iter_mut().zip(&self.entries) {
            *dst = bt601_luma(*rgb);
        }
        lut
    }

    pub fn distinct_luma_levels(&self) -> usize {
        self.luma_table().iter().collect::<BTreeSet<_>>().len()
    }
}

/// `round(0.299 R + 0.587 G + 0.114 B)`, computed exactly in integers
/// (halves round up).
#[inline]
pub fn bt601_luma([r, g, b]: [u8; 3]) -> u8 {
    let y = 299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b);
    ((y + 500) / 1000) as u8
}
