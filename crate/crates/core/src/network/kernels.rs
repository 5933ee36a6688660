//! Exact integer forward pass.
//!
//! A dense layer is treated as a convolution whose filter covers the whole
//! input, so one set of kernels serves every layer. Three kernels exist:
//!
//! * `Gather`: one dot product per output, weights laid out `[o][ky][kx][c]`
//!   so every filter row is a contiguous run of the HWC input.
//! * `Scatter`: walks non-zero inputs and adds their contribution to every
//!   output they touch, weights laid out `[ky][kx][c][o]`. Fast on the
//!   mostly-black frames typical of console games.
//! * `Tiled`: canonical-layout reference loop tiled by CPF/KPF and built on
//!   [`Accumulator::mac`].
//!
//! All three produce identical bits. Gather and Scatter accumulate in `i32`
//! when `fan_in * max|w| * max|a|` provably fits, and in `i64` otherwise.

use std::ops::AddAssign;

use crate::fixedpoint::{requantize, requantize_relu, requantize_relu_raw, requantize_raw};
use crate::fixedpoint::{Accumulator, QFormat, QValue};
use crate::tensor::QTensor;

use super::{Activation, Genome, LayerSpec, NetworkSpec};
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    #[default]
    Auto,
    Gather,
    Scatter,
    Tiled,
}

/// Below this input density `Auto` picks the scatter kernel.
const SCATTER_DENSITY: f64 = 0.25;

trait Acc: Copy + Default + AddAssign {
    fn prod(a: i16, w: i16) -> Self;
    fn widen(self) -> i64;
}

impl Acc for i32 {
    #[inline(always)]
    fn prod(a: i16, w: i16) -> Self {
        i32::from(a) * i32::from(w)
    }
    #[inline(always)]
    fn widen(self) -> i64 {
        i64::from(self)
    }
}

impl Acc for i64 {
    #[inline(always)]
    fn prod(a: i16, w: i16) -> Self {
        i64::from(a) * i64::from(w)
    }
    #[inline(always)]
    fn widen(self) -> i64 {
        self
    }
}

#[inline(always)]
fn dot<A: Acc>(x: &[i16], w: &[i16]) -> A {
    let mut s = A::default();
    for (&a, &b) in x.iter().zip(w) {
        s += A::prod(a, b);
    }
    s
}

#[derive(Debug, Clone)]
struct PreparedLayer {
    spec: LayerSpec,
    /// Canonical `[o][c][ky][kx]`.
    canonical: Vec<i16>,
    /// `[o][ky][kx][c]`.
    gather: Vec<i16>,
    /// `[ky][kx][c][o]`.
    scatter: Vec<i16>,
    max_abs_w: i64,
}

impl PreparedLayer {
    fn new(spec: LayerSpec, canonical: &[i16]) -> Self {
        let (kh, kw) = effective_filter(&spec);
        let ic = spec.in_shape.2;
        let oc = spec.out_shape.2;
        let mut gather = vec![0i16; canonical.len()];
        let mut scatter = vec![0i16; canonical.len()];
        for o in 0..oc {
            for c in 0..ic {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let w = canonical[((o * ic + c) * kh + ky) * kw + kx];
                        gather[((o * kh + ky) * kw + kx) * ic + c] = w;
                        scatter[((ky * kw + kx) * ic + c) * oc + o] = w;
                    }
                }
            }
        }
        let max_abs_w = canonical.iter().map(|&w| i64::from(w).abs()).max().unwrap_or(0);
        PreparedLayer { spec, canonical: canonical.to_vec(), gather, scatter, max_abs_w }
    }
}

fn effective_filter(l: &LayerSpec) -> (usize, usize) {
    match l.kind {
        super::LayerKind::Conv => l.filter,
        super::LayerKind::Dense => (l.in_shape.0, l.in_shape.1),
    }
}

fn effective_stride(l: &LayerSpec) -> (usize, usize) {
    match l.kind {
        super::LayerKind::Conv => l.stride,
        super::LayerKind::Dense => (1, 1),
    }
}

/// A genome re-laid for fast inference. Immutable and shareable.
#[derive(Debug, Clone)]
pub struct PreparedNetwork {
    layers: Vec<PreparedLayer>,
    output_len: usize,
}

impl PreparedNetwork {
    pub fn new(spec: &NetworkSpec, genome: &Genome) -> Result<Self, Error> {
        genome.check_len(spec)?;
        let layers = spec
            .layers()
            .iter()
            .zip(spec.layer_offsets())
            .map(|(l, off)| PreparedLayer::new(*l, &genome.raw()[off..off + l.weight_count()]))
            .collect();
        Ok(PreparedNetwork { layers, output_len: spec.output_len() })
    }

    /// Raw activation-format outputs.
    pub fn forward_raw(&self, x: &QTensor) -> Result<Vec<i16>, Error> {
        self.forward_with(x, Kernel::Auto)
    }

    pub fn forward_with(&self, x: &QTensor, kernel: Kernel) -> Result<Vec<i16>, Error> {
        let Some(first) = self.layers.first() else {
            return Ok(Vec::new());
        };
        if x.shape() != first.spec.in_shape {
            return Err(Error::config(format!(
                "input shape {:?} does not match network input {:?}",
                x.shape(),
                first.spec.in_shape
            )));
        }
        let mut cur = run_layer(&self.layers[0], x, kernel);
        for layer in &self.layers[1..] {
            cur = run_layer(layer, &cur, kernel);
        }
        debug_assert_eq!(cur.data().len(), self.output_len);
        Ok(cur.into_vec())
    }

    pub fn forward(&self, x: &QTensor) -> Result<Vec<QValue>, Error> {
        Ok(self
            .forward_raw(x)?
            .into_iter()
            .map(|r| QValue::new(i64::from(r), QFormat::ACTIVATIONS).expect("i16 fits"))
            .collect())
    }
}

/// Fixed-point forward pass of `genome` on `x`.
pub fn forward(spec: &NetworkSpec, genome: &Genome, x: &QTensor) -> Result<Vec<QValue>, Error> {
    PreparedNetwork::new(spec, genome)?.forward(x)
}

fn run_layer(layer: &PreparedLayer, input: &QTensor, kernel: Kernel) -> QTensor {
    let max_abs_a = input.data().iter().map(|&a| i64::from(a).abs()).max().unwrap_or(0);
    let bound = layer.spec.fan_in() as i64 * layer.max_abs_w * max_abs_a;
    let narrow_i32 = bound <= i64::from(i32::MAX);
    let kernel = match kernel {
        Kernel::Auto => {
            let nnz = input.data().iter().filter(|&&a| a != 0).count();
            if (nnz as f64) < SCATTER_DENSITY * input.data().len() as f64 {
                Kernel::Scatter
            } else {
                Kernel::Gather
            }
        }
        k => k,
    };
    match (kernel, narrow_i32) {
        (Kernel::Gather, true) => conv_gather::<i32>(layer, input),
        (Kernel::Gather, false) => conv_gather::<i64>(layer, input),
        (Kernel::Scatter, true) => conv_scatter::<i32>(layer, input),
        (Kernel::Scatter, false) => conv_scatter::<i64>(layer, input),
        (Kernel::Tiled, _) => conv_tiled(layer, input),
        (Kernel::Auto, _) => unreachable!(),
    }
}

const ACC_RADIX: u8 = QFormat::WEIGHTS.radix() + QFormat::ACTIVATIONS.radix();

#[inline]
fn narrow(raw: i64, act: Activation) -> i16 {
    let v = match act {
        Activation::Relu => requantize_relu_raw(raw, ACC_RADIX, QFormat::ACTIVATIONS),
        Activation::None => requantize_raw(raw, ACC_RADIX, QFormat::ACTIVATIONS),
    };
    v as i16
}

fn conv_gather<A: Acc>(layer: &PreparedLayer, input: &QTensor) -> QTensor {
    let l = &layer.spec;
    let (_, iw, ic) = l.in_shape;
    let (oh, ow, oc) = l.out_shape;
    let (kh, kw) = effective_filter(l);
    let (sh, sw) = effective_stride(l);
    let row_len = kw * ic;
    let src = input.data();
    let mut out = QTensor::zeros(oh, ow, oc);
    let mut acc = vec![A::default(); oc];
    for oy in 0..oh {
        for ox in 0..ow {
            acc.fill(A::default());
            for ky in 0..kh {
                let start = ((oy * sh + ky) * iw + ox * sw) * ic;
                let row = &src[start..start + row_len];
                for (o, a) in acc.iter_mut().enumerate() {
                    let wr = &layer.gather[(o * kh + ky) * row_len..][..row_len];
                    *a += dot::<A>(row, wr);
                }
            }
            let base = (oy * ow + ox) * oc;
            for (dst, a) in out.data_mut()[base..base + oc].iter_mut().zip(&acc) {
                *dst = narrow(a.widen(), l.activation);
            }
        }
    }
    out
}

fn conv_scatter<A: Acc>(layer: &PreparedLayer, input: &QTensor) -> QTensor {
    let l = &layer.spec;
    let (ih, iw, ic) = l.in_shape;
    let (oh, ow, oc) = l.out_shape;
    let (kh, kw) = effective_filter(l);
    let (sh, sw) = effective_stride(l);
    let src = input.data();
    let mut acc = vec![A::default(); oh * ow * oc];
    for y in 0..ih {
        for x in 0..iw {
            let px = &src[(y * iw + x) * ic..][..ic];
            if px.iter().all(|&v| v == 0) {
                continue;
            }
            // taps with ky = y - oy * sh for some output row oy
            let mut ky = y % sh;
            while ky < kh && ky <= y {
                let oy = (y - ky) / sh;
                if oy < oh {
                    let mut kx = x % sw;
                    while kx < kw && kx <= x {
                        let ox = (x - kx) / sw;
                        if ox < ow {
                            let dst = &mut acc[(oy * ow + ox) * oc..][..oc];
                            let wbase = (ky * kw + kx) * ic;
                            for (c, &a) in px.iter().enumerate() {
                                if a == 0 {
                                    continue;
                                }
                                let wr = &layer.scatter[(wbase + c) * oc..][..oc];
                                for (d, &w) in dst.iter_mut().zip(wr) {
                                    *d += A::prod(a, w);
                                }
                            }
                        }
                        kx += sw;
                    }
                }
                ky += sh;
            }
        }
    }
    let data: Vec<i16> = acc.iter().map(|a| narrow(a.widen(), l.activation)).collect();
    QTensor::from_vec(oh, ow, oc, data)
}

fn conv_tiled(layer: &PreparedLayer, input: &QTensor) -> QTensor {
    let l = &layer.spec;
    let (_, _, ic) = l.in_shape;
    let (oh, ow, oc) = l.out_shape;
    let (kh, kw) = effective_filter(l);
    let (sh, sw) = effective_stride(l);
    let mut out = QTensor::zeros(oh, ow, oc);
    let act = |y: usize, x: usize, c: usize| {
        QValue::new(i64::from(input.get(y, x, c)), QFormat::ACTIVATIONS).expect("i16 fits")
    };
    for o_block in (0..oc).step_by(l.kpf) {
        for oy in 0..oh {
            for ox in 0..ow {
                for o in o_block..o_block + l.kpf {
                    let mut acc = Accumulator::for_dot();
                    for c_block in (0..ic).step_by(l.cpf) {
                        for c in c_block..c_block + l.cpf {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let w = layer.canonical[((o * ic + c) * kh + ky) * kw + kx];
                                    let w = QValue::new(i64::from(w), QFormat::WEIGHTS).unwrap();
                                    acc = acc.mac(w, act(oy * sh + ky, ox * sw + kx, c));
                                }
                            }
                        }
                    }
                    let q = match l.activation {
                        Activation::Relu => requantize_relu(acc, QFormat::ACTIVATIONS),
                        Activation::None => requantize(acc, QFormat::ACTIVATIONS),
                    };
                    out.set(oy, ox, o, q.raw() as i16);
                }
            }
        }
    }
    out
}
