//! Row-batched affine layers with optional ReLU and their exact gradients.

use super::params::{LayerIdx, ModelParams};
use crate::scalar::Scalar;

/// Fixed-order dot product with four partial sums.
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = T::zero();
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y[r] = act(b + x[r] W)` for every row of `x`.
pub(crate) fn dense_forward<T: Scalar>(x: &[T], rows: usize, l: &LayerIdx, p: &ModelParams<T>, relu: bool) -> Vec<T> {
    let w = &p.blocks[l.w].data;
    let b = &p.blocks[l.b].data;
    debug_assert_eq!(x.len(), rows * l.inp);
    let mut y = Vec::with_capacity(rows * l.out);
    for r in 0..rows {
        let start = y.len();
        y.extend_from_slice(b);
        let z = &mut y[start..];
        for (k, &xk) in x[r * l.inp..(r + 1) * l.inp].iter().enumerate() {
            if xk == T::zero() {
                continue;
            }
            for (zo, &wo) in z.iter_mut().zip(&w[k * l.out..(k + 1) * l.out]) {
                *zo += xk * wo;
            }
        }
        if relu {
            for v in z.iter_mut() {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
    }
    y
}

/// Backpropagates `dy` (gradient w.r.t. the layer output) through one layer.
/// Accumulates weight and bias gradients into `g` and returns the gradient
/// w.r.t. the input when `need_dx` is set. `y` is the stored forward output.
#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward<T: Scalar>(
    x: &[T],
    y: &[T],
    mut dy: Vec<T>,
    rows: usize,
    l: &LayerIdx,
    p: &ModelParams<T>,
    g: &mut ModelParams<T>,
    relu: bool,
    need_dx: bool,
) -> Option<Vec<T>> {
    if relu {
        for (d, &v) in dy.iter_mut().zip(y) {
            if !(v > T::zero()) {
                *d = T::zero();
            }
        }
    }
    {
        let gb = &mut g.blocks[l.b].data;
        for r in 0..rows {
            for (acc, &d) in gb.iter_mut().zip(&dy[r * l.out..(r + 1) * l.out]) {
                *acc += d;
            }
        }
    }
    {
        let gw = &mut g.blocks[l.w].data;
        for r in 0..rows {
            let dz = &dy[r * l.out..(r + 1) * l.out];
            if dz.iter().all(|&d| d == T::zero()) {
                continue;
            }
            for (k, &xk) in x[r * l.inp..(r + 1) * l.inp].iter().enumerate() {
                if xk == T::zero() {
                    continue;
                }
                for (acc, &d) in gw[k * l.out..(k + 1) * l.out].iter_mut().zip(dz) {
                    *acc += xk * d;
                }
            }
        }
    }
    if !need_dx {
        return None;
    }
    let w = &p.blocks[l.w].data;
    let mut dx = vec![T::zero(); rows * l.inp];
    for r in 0..rows {
        let dz = &dy[r * l.out..(r + 1) * l.out];
        if dz.iter().all(|&d| d == T::zero()) {
            continue;
        }
        for k in 0..l.inp {
            dx[r * l.inp + k] = dot(dz, &w[k * l.out..(k + 1) * l.out]);
        }
    }
    Some(dx)
}

/// Activations of a stack of layers applied to the same rows. `outputs[j]`
/// is the output of layer `j`; the input is kept alongside.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct MlpTrace<T> {
    pub rows: usize,
    pub input: Vec<T>,
    pub outputs: Vec<Vec<T>>,
}

impl<T: Scalar> MlpTrace<T> {
    pub fn last(&self) -> &[T] {
        self.outputs.last().map(Vec::as_slice).unwrap_or(&self.input)
    }
}

/// Runs an MLP; every layer uses ReLU except possibly the last.
pub(crate) fn mlp_forward<T: Scalar>(
    input: Vec<T>,
    rows: usize,
    layers: &[LayerIdx],
    p: &ModelParams<T>,
    relu_last: bool,
) -> MlpTrace<T> {
    let mut outputs: Vec<Vec<T>> = Vec::with_capacity(layers.len());
    for (j, l) in layers.iter().enumerate() {
        let relu = relu_last || j + 1 < layers.len();
        let x = if j == 0 { &input } else { &outputs[j - 1] };
        let y = dense_forward(x, rows, l, p, relu);
        outputs.push(y);
    }
    MlpTrace { rows, input, outputs }
}

/// Backward through an MLP given the gradient of its final output.
pub(crate) fn mlp_backward<T: Scalar>(
    trace: &MlpTrace<T>,
    d_out: Vec<T>,
    layers: &[LayerIdx],
    p: &ModelParams<T>,
    g: &mut ModelParams<T>,
    relu_last: bool,
    need_dx: bool,
) -> Option<Vec<T>> {
    let mut d = d_out;
    for j in (0..layers.len()).rev() {
        let relu = relu_last || j + 1 < layers.len();
        let x = if j == 0 { &trace.input } else { &trace.outputs[j - 1] };
        let want_dx = j > 0 || need_dx;
        d = dense_backward(x, &trace.outputs[j], d, trace.rows, &layers[j], p, g, relu, want_dx)?;
    }
    Some(d)
}
