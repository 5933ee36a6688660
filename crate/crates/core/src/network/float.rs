//! Double-precision reference with the same layer semantics as the
//! fixed-point kernels: canonical weight layout, no biases, ReLU after every
//! convolution, linear dense output.

use crate::tensor::Tensor;

use super::{Activation, LayerKind, LayerSpec, NetworkSpec};

/// Valid convolution on an HWC tensor with canonical `[o][c][ky][kx]` weights.
pub fn conv2d_float(input: &Tensor<f64>, layer: &LayerSpec, weights: &[f64]) -> Tensor<f64> {
    let (_, _, ic) = layer.in_shape;
    let (oh, ow, oc) = layer.out_shape;
    let (kh, kw) = layer.filter;
    let (sh, sw) = layer.stride;
    let mut out = Tensor::zeros(oh, ow, oc);
    for o in 0..oc {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = 0.0;
                for c in 0..ic {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            s += weights[((o * ic + c) * kh + ky) * kw + kx]
                                * input.get(oy * sh + ky, ox * sw + kx, c);
                        }
                    }
                }
                out.set(oy, ox, o, activate(s, layer.activation));
            }
        }
    }
    out
}

/// Dense layer over the input flattened channel-major (`[c][y][x]`),
/// matching canonical weights `[o][c][y][x]`.
pub fn dense_float(input: &Tensor<f64>, layer: &LayerSpec, weights: &[f64]) -> Vec<f64> {
    let (h, w, ic) = layer.in_shape;
    let units = layer.out_shape.2;
    (0..units)
        .map(|o| {
            let mut s = 0.0;
            for c in 0..ic {
                for y in 0..h {
                    for x in 0..w {
                        s += weights[((o * ic + c) * h + y) * w + x] * input.get(y, x, c);
                    }
                }
            }
            activate(s, layer.activation)
        })
        .collect()
}

fn activate(v: f64, act: Activation) -> f64 {
    match act {
        Activation::Relu => v.max(0.0),
        Activation::None => v,
    }
}

/// Float forward pass over real-valued canonical weights.
///
/// # Panics
/// If `weights` or `x` do not match `spec`.
pub fn forward_float(spec: &NetworkSpec, weights: &[f64], x: &Tensor<f64>) -> Vec<f64> {
    assert_eq!(weights.len(), spec.total_params(), "weight vector length");
    let mut cur = x.clone();
    let mut offset = 0;
    for layer in spec.layers() {
        assert_eq!(cur.shape(), layer.in_shape, "layer input shape");
        let w = &weights[offset..offset + layer.weight_count()];
        offset += layer.weight_count();
        cur = match layer.kind {
            LayerKind::Conv => conv2d_float(&cur, layer, w),
            LayerKind::Dense => {
                let v = dense_float(&cur, layer, w);
                Tensor::from_vec(1, 1, v.len(), v)
            }
        };
    }
    cur.into_vec()
}
