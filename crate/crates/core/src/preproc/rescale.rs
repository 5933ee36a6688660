use std::sync::OnceLock;

use super::{LumaFrame, ScaledFrame, FRAME_HEIGHT, FRAME_WIDTH, SCALED_SIZE};

/// Interpolation weights use 8 fractional bits.
const WEIGHT_BITS: u32 = 8;
const ONE: u32 = 1 << WEIGHT_BITS;

/// One output coordinate's source taps: `v = (p0 * (256 - frac) + p1 * frac) / 256`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tap {
    pub i0: usize,
    pub i1: usize,
    pub frac: u32,
}

/// Pixel-center aligned taps for resampling `src` samples onto `dst`:
/// source coordinate `(d + 0.5) * src / dst - 0.5`, clamped to the image and
/// rounded to the nearest 1/256.
pub fn rescale_taps(src: usize, dst: usize) -> Vec<Tap> {
    let (src_i, dst_i) = (src as i64, dst as i64);
    let max_pos = (src_i - 1) * i64::from(ONE);
    (0..dst_i)
        .map(|d| {
            // ((2d + 1) * src - dst) / (2 * dst), in 1/256 units, rounded half up
            let num = ((2 * d + 1) * src_i - dst_i) * i64::from(ONE);
            let den = 2 * dst_i;
            let pos = (2 * num + den).div_euclid(2 * den).clamp(0, max_pos);
            let i0 = (pos >> WEIGHT_BITS) as usize;
            Tap { i0, i1: (i0 + 1).min(src - 1), frac: (pos & i64::from(ONE - 1)) as u32 }
        })
        .collect()
}

fn taps() -> &'static (Vec<Tap>, Vec<Tap>) {
    static TAPS: OnceLock<(Vec<Tap>, Vec<Tap>)> = OnceLock::new();
    TAPS.get_or_init(|| {
        (rescale_taps(FRAME_WIDTH, SCALED_SIZE), rescale_taps(FRAME_HEIGHT, SCALED_SIZE))
    })
}

/// Bilinear downscale 160x210 -> 84x84 in 8.8 fixed point, rounded to nearest.
pub fn rescale(f: &LumaFrame) -> ScaledFrame {
    let (xt, yt) = taps();
    let src = f.pixels();
    let mut out = Vec::with_capacity(SCALED_SIZE * SCALED_SIZE);
    for ty in yt {
        let r0 = &src[ty.i0 * FRAME_WIDTH..(ty.i0 + 1) * FRAME_WIDTH];
        let r1 = &src[ty.i1 * FRAME_WIDTH..(ty.i1 + 1) * FRAME_WIDTH];
        let (wy1, wy0) = (ty.frac, ONE - ty.frac);
        for tx in xt {
            let (wx1, wx0) = (tx.frac, ONE - tx.frac);
            let top = u32::from(r0[tx.i0]) * wx0 + u32::from(r0[tx.i1]) * wx1;
            let bottom = u32::from(r1[tx.i0]) * wx0 + u32::from(r1[tx.i1]) * wx1;
            let v = (top * wy0 + bottom * wy1 + (1 << (2 * WEIGHT_BITS - 1))) >> (2 * WEIGHT_BITS);
            out.push(v as u8);
        }
    }
    ScaledFrame::from_pixels(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taps_stay_in_bounds() {
        for (src, dst) in [(160, 84), (210, 84), (10, 3), (5, 5)] {
            for t in rescale_taps(src, dst) {
                assert!(t.i0 < src && t.i1 < src && t.frac < ONE);
            }
        }
    }

    #[test]
    fn vertical_taps_are_exact() {
        // 210 / 84 = 2.5: source rows fall on quarter pixels
        let t = rescale_taps(210, 84);
        assert_eq!(t[0], Tap { i0: 0, i1: 1, frac: 192 });
        assert_eq!(t[1], Tap { i0: 3, i1: 4, frac: 64 });
        assert_eq!(t[83].i0, 208);
    }

    #[test]
    fn constant_frame_is_preserved() {
        let s = rescale(&LumaFrame::filled(77));
        assert!(s.pixels().iter().all(|&v| v == 77));
        let s = rescale(&LumaFrame::filled(255));
        assert!(s.pixels().iter().all(|&v| v == 255));
    }
}
