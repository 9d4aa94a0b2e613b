use rand::Rng as _;

use super::GesIDNetConfig;
use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::scalar::Scalar;

/// A named parameter array. Weights are stored input-major: `rows` is the
/// fan-in and `cols` the fan-out, so entry `(k, o)` sits at `k * cols + o`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock<T> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

/// All learnable arrays of a network, in declaration order. Gradients use
/// the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub blocks: Vec<ParamBlock<T>>,
}

/// Indices of one affine layer's weight and bias blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LayerIdx {
    pub w: usize,
    pub b: usize,
    pub inp: usize,
    pub out: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    /// `[block][scale][layer]`
    pub sa: [Vec<Vec<LayerIdx>>; 2],
    pub global: [Vec<LayerIdx>; 2],
    /// `resize[0]`: high → low level, `resize[1]`: low → high level.
    pub resize: [LayerIdx; 2],
    pub gate: [LayerIdx; 2],
    pub head: [Vec<LayerIdx>; 2],
    pub shapes: Vec<(String, usize, usize)>,
}

impl Layout {
    pub fn new(cfg: &GesIDNetConfig) -> Self {
        let mut shapes = Vec::new();
        let mut layer = |name: String, inp: usize, out: usize| -> LayerIdx {
            let w = shapes.len();
            shapes.push((format!("{name}.weight"), inp, out));
            shapes.push((format!("{name}.bias"), 1, out));
            LayerIdx { w, b: w + 1, inp, out }
        };
        let mlp = |prefix: &str, mut inp: usize, widths: &[usize], layer: &mut dyn FnMut(String, usize, usize) -> LayerIdx| {
            widths
                .iter()
                .enumerate()
                .map(|(j, &out)| {
                    let l = layer(format!("{prefix}.l{j}"), inp, out);
                    inp = out;
                    l
                })
                .collect::<Vec<_>>()
        };

        let d1 = cfg.sa1.out_width();
        let d2 = cfg.sa2.out_width();
        let sa_in = [3 + cfg.extra_channels(), 3 + d1];
        let mut sa: [Vec<Vec<LayerIdx>>; 2] = [Vec::new(), Vec::new()];
        for (b, spec) in [&cfg.sa1, &cfg.sa2].into_iter().enumerate() {
            for (s, scale) in spec.scales.iter().enumerate() {
                sa[b].push(mlp(&format!("sa{}.s{s}", b + 1), sa_in[b], &scale.mlp, &mut layer));
            }
        }
        let [l1, l2] = cfg.level_dims;
        let widths = |k: usize| {
            let mut w = cfg.global_hidden[k].clone();
            w.push(cfg.level_dims[k]);
            w
        };
        let xyz = if cfg.global_xyz { 3 } else { 0 };
        let global = [mlp("global1", xyz + d1, &widths(0), &mut layer), mlp("global2", xyz + d2, &widths(1), &mut layer)];
        let resize = [layer("resize2to1".into(), l2, l1), layer("resize1to2".into(), l1, l2)];
        let gate = [layer("gate1".into(), l1, 1), layer("gate2".into(), l2, 1)];
        let head_widths = |hidden: &[usize]| {
            let mut w = hidden.to_vec();
            w.push(cfg.num_classes);
            w
        };
        let head = [
            mlp("head1", l1, &head_widths(&cfg.head_fc_widths_l1), &mut layer),
            mlp("head2", l2, &head_widths(&cfg.head_fc_widths_l2), &mut layer),
        ];
        Self { sa, global, resize, gate, head, shapes }
    }
}

impl<T: Scalar> ModelParams<T> {
    /// All-zero parameters shaped for `cfg`.
    pub fn zeros(cfg: &GesIDNetConfig) -> Self {
        Self::zeros_like_layout(&Layout::new(cfg))
    }

    pub(crate) fn zeros_like_layout(layout: &Layout) -> Self {
        Self {
            blocks: layout
                .shapes
                .iter()
                .map(|(name, rows, cols)| ParamBlock { name: name.clone(), rows: *rows, cols: *cols, data: vec![T::zero(); rows * cols] })
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            blocks: self
                .blocks
                .iter()
                .map(|b| ParamBlock { name: b.name.clone(), rows: b.rows, cols: b.cols, data: vec![T::zero(); b.data.len()] })
                .collect(),
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.blocks.iter().map(|b| b.data.len()).sum()
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock<T>> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut ParamBlock<T>> {
        self.blocks.iter_mut().find(|b| b.name == name)
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.data.iter().all(|v| v.is_finite()))
    }

    /// Checks names and shapes against the layout of `cfg`.
    pub fn check_shapes(&self, cfg: &GesIDNetConfig) -> Result<()> {
        let layout = Layout::new(cfg);
        if layout.shapes.len() != self.blocks.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameter blocks, found {}",
                layout.shapes.len(),
                self.blocks.len()
            )));
        }
        for ((name, rows, cols), b) in layout.shapes.iter().zip(&self.blocks) {
            if *name != b.name || *rows != b.rows || *cols != b.cols || b.data.len() != rows * cols {
                return Err(Error::ShapeMismatch(format!(
                    "block {} is {}x{}, expected {} {}x{}",
                    b.name, b.rows, b.cols, name, rows, cols
                )));
            }
        }
        Ok(())
    }

    /// `self += scale * other`, block by block.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += scale * *y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for b in &mut self.blocks {
            for x in &mut b.data {
                *x *= s;
            }
        }
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            blocks: self
                .blocks
                .iter()
                .map(|b| ParamBlock {
                    name: b.name.clone(),
                    rows: b.rows,
                    cols: b.cols,
                    data: b.data.iter().map(|v| U::lit(v.as_f64())).collect(),
                })
                .collect(),
        }
    }
}

/// Weights uniform in `±sqrt(6 / fan_in)`, biases zero.
pub fn init_params<T: Scalar>(cfg: &GesIDNetConfig, seed: u64) -> Result<ModelParams<T>> {
    cfg.validate()?;
    let mut params = ModelParams::zeros(cfg);
    let mut rng = rng_from(seed);
    for b in &mut params.blocks {
        if b.name.ends_with(".bias") {
            continue;
        }
        let bound = (6.0 / b.rows as f64).sqrt();
        for v in &mut b.data {
            *v = T::lit(rng.random_range(-bound..bound));
        }
    }
    Ok(params)
}
