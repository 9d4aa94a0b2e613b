use super::layers::{dot, mlp_backward, mlp_forward, MlpTrace};
use super::params::{LayerIdx, Layout, ModelParams};
use super::sampling::{ball_query_group, farthest_point_sample};
use super::{GesIDNetConfig, SABlockSpec};
use crate::cloud::GestureCloud;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-scale activations of a set-abstraction block.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ScaleTrace<T> {
    groups: Vec<Vec<usize>>,
    mlp: MlpTrace<T>,
    /// Winning row per `(center, channel)` of the max-pool.
    argmax: Vec<usize>,
}

/// Output of one set-abstraction block plus what backprop needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SaTrace<T> {
    /// Indices of the sampled centers among the block's input points.
    pub centers: Vec<usize>,
    pub center_xyz: Vec<[T; 3]>,
    /// Concatenated multi-scale feature per center, row-major.
    pub features: Vec<T>,
    pub width: usize,
    scales: Vec<ScaleTrace<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PoolTrace<T> {
    mlp: MlpTrace<T>,
    argmax: Vec<usize>,
}

/// Scores and weights at one fusion site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionTrace<T> {
    pub score_native: T,
    pub score_resized: T,
    pub w_native: T,
    pub w_resized: T,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct FusedPath<T> {
    resize: [MlpTrace<T>; 2],
    fusion: [FusionTrace<T>; 2],
    heads: [MlpTrace<T>; 2],
}

/// Every intermediate activation of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T> {
    pub sa: [SaTrace<T>; 2],
    /// Level features `F^1`, `F^2`.
    pub levels: [Vec<T>; 2],
    /// Fused features `Y^1`, `Y^2` (absent when fusion is disabled).
    pub fused: Option<[Vec<T>; 2]>,
    pub(crate) pools: [PoolTrace<T>; 2],
    pub(crate) fused_path: Option<FusedPath<T>>,
    pub(crate) single_head: Option<MlpTrace<T>>,
    pub(crate) num_scalars: usize,
    pub(crate) num_classes: usize,
}

impl<T: Scalar> ForwardTrace<T> {
    /// Fusion weights at the low and high level, when fusion is enabled.
    pub fn fusion(&self) -> Option<[FusionTrace<T>; 2]> {
        self.fused_path.as_ref().map(|f| f.fusion)
    }
}

/// Logits of both heads. With fusion disabled only `primary` exists.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward<T> {
    pub primary: Vec<T>,
    pub auxiliary: Option<Vec<T>>,
    pub trace: ForwardTrace<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Losses<T> {
    pub total: T,
    pub primary: T,
    pub auxiliary: T,
}

fn sa_forward<T: Scalar>(
    xyz: &[[T; 3]],
    feats: &[T],
    fw: usize,
    spec: &SABlockSpec,
    layers: &[Vec<LayerIdx>],
    p: &ModelParams<T>,
) -> Result<SaTrace<T>> {
    if feats.len() != xyz.len() * fw {
        return Err(Error::ShapeMismatch(format!("{} feature values for {} points of width {fw}", feats.len(), xyz.len())));
    }
    let centers = farthest_point_sample(xyz, spec.centers)?;
    let center_xyz: Vec<[T; 3]> = centers.iter().map(|&c| xyz[c]).collect();
    let nc = centers.len();
    let width = spec.out_width();
    let mut features = vec![T::zero(); nc * width];
    let mut scales = Vec::with_capacity(spec.scales.len());
    let mut offset = 0;
    for (scale, scale_layers) in spec.scales.iter().zip(layers) {
        let m = scale.group_size;
        let groups = ball_query_group(xyz, &centers, T::lit(scale.radius), m);
        let inp = 3 + fw;
        let mut input = Vec::with_capacity(nc * m * inp);
        for (ci, group) in groups.iter().enumerate() {
            let c = center_xyz[ci];
            for &j in group {
                let q = xyz[j];
                input.extend_from_slice(&[q[0] - c[0], q[1] - c[1], q[2] - c[2]]);
                input.extend_from_slice(&feats[j * fw..(j + 1) * fw]);
            }
        }
        let mlp = mlp_forward(input, nc * m, scale_layers, p, true);
        let out = scale.out_width();
        let last = mlp.last();
        let mut argmax = vec![0usize; nc * out];
        for ci in 0..nc {
            for k in 0..out {
                let mut best = ci * m;
                for r in ci * m + 1..(ci + 1) * m {
                    if last[r * out + k] > last[best * out + k] {
                        best = r;
                    }
                }
                argmax[ci * out + k] = best;
                features[ci * width + offset + k] = last[best * out + k];
            }
        }
        offset += out;
        scales.push(ScaleTrace { groups, mlp, argmax });
    }
    Ok(SaTrace { centers, center_xyz, features, width, scales })
}

fn sa_backward<T: Scalar>(
    trace: &SaTrace<T>,
    d_features: &[T],
    fw: usize,
    num_points: usize,
    spec: &SABlockSpec,
    layers: &[Vec<LayerIdx>],
    p: &ModelParams<T>,
    g: &mut ModelParams<T>,
    need_input_grad: bool,
) -> Option<Vec<T>> {
    let nc = trace.centers.len();
    let width = trace.width;
    let mut d_in = need_input_grad.then(|| vec![T::zero(); num_points * fw]);
    let mut offset = 0;
    for ((scale, st), scale_layers) in spec.scales.iter().zip(&trace.scales).zip(layers) {
        let m = scale.group_size;
        let out = scale.out_width();
        let mut d_last = vec![T::zero(); nc * m * out];
        for ci in 0..nc {
            for k in 0..out {
                let r = st.argmax[ci * out + k];
                d_last[r * out + k] += d_features[ci * width + offset + k];
            }
        }
        offset += out;
        let dx = mlp_backward(&st.mlp, d_last, scale_layers, p, g, true, need_input_grad);
        if let (Some(dx), Some(acc)) = (dx, d_in.as_mut()) {
            let inp = 3 + fw;
            for (ci, group) in st.groups.iter().enumerate() {
                for (jj, &j) in group.iter().enumerate() {
                    let row = ci * m + jj;
                    for f in 0..fw {
                        acc[j * fw + f] += dx[row * inp + 3 + f];
                    }
                }
            }
        }
    }
    d_in
}

/// Rows fed to the global-feature MLP: the block features, optionally
/// preceded by the center coordinates.
fn pool_input<T: Scalar>(sa: &SaTrace<T>, with_xyz: bool) -> Vec<T> {
    if !with_xyz {
        return sa.features.clone();
    }
    let mut rows = Vec::with_capacity(sa.centers.len() * (3 + sa.width));
    for (c, f) in sa.center_xyz.iter().zip(sa.features.chunks(sa.width)) {
        rows.extend_from_slice(c);
        rows.extend_from_slice(f);
    }
    rows
}

/// Drops the coordinate columns from a gradient over [`pool_input`] rows.
fn strip_xyz<T: Scalar>(d: Vec<T>, width: usize, with_xyz: bool) -> Vec<T> {
    if !with_xyz {
        return d;
    }
    d.chunks(3 + width).flat_map(|r| r[3..].iter().copied()).collect()
}

fn pool_forward<T: Scalar>(input: Vec<T>, rows: usize, layers: &[LayerIdx], p: &ModelParams<T>) -> (PoolTrace<T>, Vec<T>) {
    let mlp = mlp_forward(input, rows, layers, p, true);
    let width = layers.last().map(|l| l.out).unwrap_or(0);
    let last = mlp.last();
    let mut argmax = vec![0usize; width];
    let mut pooled = vec![T::zero(); width];
    for k in 0..width {
        let mut best = 0;
        for r in 1..rows {
            if last[r * width + k] > last[best * width + k] {
                best = r;
            }
        }
        argmax[k] = best;
        pooled[k] = last[best * width + k];
    }
    (PoolTrace { mlp, argmax }, pooled)
}

fn pool_backward<T: Scalar>(trace: &PoolTrace<T>, d_pooled: &[T], layers: &[LayerIdx], p: &ModelParams<T>, g: &mut ModelParams<T>) -> Vec<T> {
    let width = d_pooled.len();
    let mut d_last = vec![T::zero(); trace.mlp.rows * width];
    for (k, &d) in d_pooled.iter().enumerate() {
        d_last[trace.argmax[k] * width + k] += d;
    }
    mlp_backward(&trace.mlp, d_last, layers, p, g, true, true).expect("input gradient requested")
}

/// Applies one set-abstraction block of `cfg` (`block` 0 or 1) to points with
/// per-point features of width `feature_width`.
pub fn sa_block_forward<T: Scalar>(
    xyz: &[[T; 3]],
    features: &[T],
    feature_width: usize,
    cfg: &GesIDNetConfig,
    block: usize,
    params: &ModelParams<T>,
) -> Result<SaTrace<T>> {
    let layout = Layout::new(cfg);
    params.check_shapes(cfg)?;
    let (spec, expected) = match block {
        0 => (&cfg.sa1, cfg.extra_channels()),
        1 => (&cfg.sa2, cfg.sa1.out_width()),
        _ => return Err(Error::ShapeMismatch(format!("no set-abstraction block {block}"))),
    };
    if feature_width != expected {
        return Err(Error::ShapeMismatch(format!("block {block} expects feature width {expected}, got {feature_width}")));
    }
    sa_forward(xyz, features, feature_width, spec, &layout.sa[block], params)
}

/// Pointwise MLP over the per-center features `f_s` (row-major, `rows`
/// rows) followed by max-pooling over centers, for level `level` (0 or 1).
/// With `cfg.global_xyz` every row starts with its center's coordinates.
pub fn global_feature<T: Scalar>(f_s: &[T], rows: usize, cfg: &GesIDNetConfig, level: usize, params: &ModelParams<T>) -> Result<Vec<T>> {
    let layout = Layout::new(cfg);
    params.check_shapes(cfg)?;
    let layers = layout.global.get(level).ok_or_else(|| Error::ShapeMismatch(format!("no level {level}")))?;
    if rows == 0 || f_s.len() != rows * layers[0].inp {
        return Err(Error::ShapeMismatch(format!("{} values for {rows} rows of width {}", f_s.len(), layers[0].inp)));
    }
    Ok(pool_forward(f_s.to_vec(), rows, layers, params).1)
}

/// Resizing block `ReLU(W f + b)` mapping a level feature to the other
/// level's width.
pub fn resize_feature<T: Scalar>(f: &[T], cfg: &GesIDNetConfig, from_level: usize, to_level: usize, params: &ModelParams<T>) -> Result<Vec<T>> {
    let layout = Layout::new(cfg);
    params.check_shapes(cfg)?;
    let l = match (from_level, to_level) {
        (1, 0) => layout.resize[0],
        (0, 1) => layout.resize[1],
        _ => return Err(Error::ShapeMismatch(format!("no resizing block {from_level} -> {to_level}"))),
    };
    if f.len() != l.inp {
        return Err(Error::ShapeMismatch(format!("resize input has {} values, expected {}", f.len(), l.inp)));
    }
    Ok(mlp_forward(f.to_vec(), 1, &[l], params, true).outputs.remove(0))
}

/// Two-way softmax over gate scores. The larger weight is computed directly
/// and the smaller as its complement, so the pair sums to exactly one.
fn gate_weights<T: Scalar>(score_native: T, score_resized: T) -> (T, T) {
    let hi = score_native.max(score_resized);
    let lo = score_native.min(score_resized);
    let w_hi = T::one() / (T::one() + (lo - hi).exp());
    let w_lo = T::one() - w_hi;
    if score_native >= score_resized {
        (w_hi, w_lo)
    } else {
        (w_lo, w_hi)
    }
}

fn fuse<T: Scalar>(native: &[T], resized: &[T], gate_w: &[T], gate_b: T) -> (Vec<T>, FusionTrace<T>) {
    let score_native = dot(gate_w, native) + gate_b;
    let score_resized = dot(gate_w, resized) + gate_b;
    let (w_native, w_resized) = gate_weights(score_native, score_resized);
    let y = native.iter().zip(resized).map(|(&n, &r)| w_resized * r + w_native * n).collect();
    (y, FusionTrace { score_native, score_resized, w_native, w_resized })
}

/// Attention fusion of a level's own feature with the resized feature of the
/// other level. One shared scalar gate scores both inputs; returns the fused
/// vector and the `(native, resized)` weights.
pub fn attention_fuse<T: Scalar>(f_native: &[T], f_resized: &[T], gate_w: &[T], gate_b: T) -> Result<(Vec<T>, T, T)> {
    if f_native.len() != f_resized.len() || gate_w.len() != f_native.len() {
        return Err(Error::ShapeMismatch(format!(
            "fusion inputs of width {} and {} with gate width {}",
            f_native.len(),
            f_resized.len(),
            gate_w.len()
        )));
    }
    let (y, t) = fuse(f_native, f_resized, gate_w, gate_b);
    Ok((y, t.w_native, t.w_resized))
}

/// Returns gradients w.r.t. (native, resized) and accumulates gate gradients.
fn fuse_backward<T: Scalar>(
    t: &FusionTrace<T>,
    native: &[T],
    resized: &[T],
    d_y: &[T],
    gate: &LayerIdx,
    p: &ModelParams<T>,
    g: &mut ModelParams<T>,
) -> (Vec<T>, Vec<T>) {
    let gw = &p.blocks[gate.w].data;
    let dw_native = dot(d_y, native);
    let dw_resized = dot(d_y, resized);
    let ds_resized = t.w_resized * t.w_native * (dw_resized - dw_native);
    let ds_native = -ds_resized;
    {
        let ggw = &mut g.blocks[gate.w].data;
        for k in 0..ggw.len() {
            ggw[k] += ds_native * native[k] + ds_resized * resized[k];
        }
        g.blocks[gate.b].data[0] += ds_native + ds_resized;
    }
    let d_native = d_y.iter().zip(gw).map(|(&d, &w)| t.w_native * d + ds_native * w).collect();
    let d_resized = d_y.iter().zip(gw).map(|(&d, &w)| t.w_resized * d + ds_resized * w).collect();
    (d_native, d_resized)
}

/// Runs the full network on a centered, resampled cloud of
/// `cfg.point_count` points.
pub fn forward<T: Scalar>(params: &ModelParams<T>, cloud: &GestureCloud<T>, cfg: &GesIDNetConfig) -> Result<Forward<T>> {
    cfg.validate()?;
    params.check_shapes(cfg)?;
    if cloud.len() != cfg.point_count {
        return Err(Error::ShapeMismatch(format!("cloud has {} points, network expects {}", cloud.len(), cfg.point_count)));
    }
    if !cloud.points.iter().all(|p| p.to_array().iter().all(|v| v.is_finite())) {
        return Err(Error::NonFiniteActivation("input cloud".into()));
    }
    let layout = Layout::new(cfg);
    let xyz: Vec<[T; 3]> = cloud.points.iter().map(|p| p.xyz()).collect();
    let fw = cfg.extra_channels();
    let extra: Vec<T> = cloud.points.iter().flat_map(|p| p.to_array()[3..3 + fw].to_vec()).collect();

    let sa1 = sa_forward(&xyz, &extra, fw, &cfg.sa1, &layout.sa[0], params)?;
    let sa2 = sa_forward(&sa1.center_xyz, &sa1.features, sa1.width, &cfg.sa2, &layout.sa[1], params)?;
    let (pool1, f1) = pool_forward(pool_input(&sa1, cfg.global_xyz), sa1.centers.len(), &layout.global[0], params);
    let (pool2, f2) = pool_forward(pool_input(&sa2, cfg.global_xyz), sa2.centers.len(), &layout.global[1], params);

    let (primary, auxiliary, fused, fused_path, single_head) = if cfg.fusion {
        let r21 = mlp_forward(f2.clone(), 1, &[layout.resize[0]], params, true);
        let r12 = mlp_forward(f1.clone(), 1, &[layout.resize[1]], params, true);
        let gate = |k: usize| (&params.blocks[layout.gate[k].w].data, params.blocks[layout.gate[k].b].data[0]);
        let (gw1, gb1) = gate(0);
        let (y1, t1) = fuse(&f1, r21.last(), gw1, gb1);
        let (gw2, gb2) = gate(1);
        let (y2, t2) = fuse(&f2, r12.last(), gw2, gb2);
        let h1 = mlp_forward(y1.clone(), 1, &layout.head[0], params, false);
        let h2 = mlp_forward(y2.clone(), 1, &layout.head[1], params, false);
        let primary = h1.last().to_vec();
        let auxiliary = h2.last().to_vec();
        let path = FusedPath { resize: [r21, r12], fusion: [t1, t2], heads: [h1, h2] };
        (primary, Some(auxiliary), Some([y1, y2]), Some(path), None)
    } else {
        let h = mlp_forward(f2.clone(), 1, &layout.head[1], params, false);
        (h.last().to_vec(), None, None, None, Some(h))
    };

    let finite = |v: &[T]| v.iter().all(|x| x.is_finite());
    if !finite(&primary) || !auxiliary.as_deref().is_none_or(finite) {
        return Err(Error::NonFiniteActivation("logits".into()));
    }
    Ok(Forward {
        primary,
        auxiliary,
        trace: ForwardTrace {
            sa: [sa1, sa2],
            levels: [f1, f2],
            fused,
            pools: [pool1, pool2],
            fused_path,
            single_head,
            num_scalars: params.num_scalars(),
            num_classes: cfg.num_classes,
        },
    })
}

/// Probabilities from logits, computed with max subtraction.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let e: Vec<T> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s = e.iter().fold(T::zero(), |a, &b| a + b);
    e.into_iter().map(|v| v / s).collect()
}

fn cross_entropy<T: Scalar>(logits: &[T], label: usize) -> T {
    let m = logits.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let s = logits.iter().fold(T::zero(), |a, &z| a + (z - m).exp());
    m + s.ln() - logits[label]
}

/// Primary cross-entropy plus the auxiliary one (when present), unit weight.
pub fn total_loss<T: Scalar>(primary: &[T], auxiliary: Option<&[T]>, label: usize) -> Result<Losses<T>> {
    let classes = primary.len();
    if label >= classes {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    if let Some(a) = auxiliary {
        if a.len() != classes {
            return Err(Error::ShapeMismatch(format!("heads disagree on class count: {} vs {}", classes, a.len())));
        }
    }
    let l1 = cross_entropy(primary, label);
    let l2 = auxiliary.map(|a| cross_entropy(a, label)).unwrap_or_else(T::zero);
    Ok(Losses { total: l1 + l2, primary: l1, auxiliary: l2 })
}

fn loss_grad<T: Scalar>(logits: &[T], label: usize) -> Vec<T> {
    let mut p = softmax(logits);
    p[label] -= T::one();
    p
}

/// Exact gradient of the total loss w.r.t. every parameter for the sample
/// that produced `fwd`.
pub fn backward<T: Scalar>(params: &ModelParams<T>, fwd: &Forward<T>, label: usize, cfg: &GesIDNetConfig) -> Result<ModelParams<T>> {
    let trace = &fwd.trace;
    if trace.num_scalars != params.num_scalars() || trace.num_classes != cfg.num_classes {
        return Err(Error::TraceMismatch(format!(
            "trace for {} parameters / {} classes, given {} / {}",
            trace.num_scalars,
            trace.num_classes,
            params.num_scalars(),
            cfg.num_classes
        )));
    }
    if cfg.fusion != trace.fused_path.is_some() {
        return Err(Error::TraceMismatch("fusion setting differs from the forward pass".into()));
    }
    if label >= cfg.num_classes {
        return Err(Error::LabelOutOfRange { label, classes: cfg.num_classes });
    }
    let layout = Layout::new(cfg);
    let mut g = ModelParams::zeros_like_layout(&layout);
    let [f1, f2] = &trace.levels;

    let (d_f1, d_f2) = match (&trace.fused_path, &trace.single_head) {
        (Some(path), _) => {
            let aux = fwd.auxiliary.as_ref().ok_or_else(|| Error::TraceMismatch("missing auxiliary logits".into()))?;
            let d_y1 = mlp_backward(&path.heads[0], loss_grad(&fwd.primary, label), &layout.head[0], params, &mut g, false, true)
                .expect("input gradient requested");
            let d_y2 = mlp_backward(&path.heads[1], loss_grad(aux, label), &layout.head[1], params, &mut g, false, true)
                .expect("input gradient requested");
            let (mut d_f1, d_r21) = fuse_backward(&path.fusion[0], f1, path.resize[0].last(), &d_y1, &layout.gate[0], params, &mut g);
            let (mut d_f2, d_r12) = fuse_backward(&path.fusion[1], f2, path.resize[1].last(), &d_y2, &layout.gate[1], params, &mut g);
            let from_r21 = mlp_backward(&path.resize[0], d_r21, &[layout.resize[0]], params, &mut g, true, true).expect("input gradient requested");
            let from_r12 = mlp_backward(&path.resize[1], d_r12, &[layout.resize[1]], params, &mut g, true, true).expect("input gradient requested");
            for (a, b) in d_f2.iter_mut().zip(&from_r21) {
                *a += *b;
            }
            for (a, b) in d_f1.iter_mut().zip(&from_r12) {
                *a += *b;
            }
            (d_f1, d_f2)
        }
        (None, Some(head)) => {
            let d_f2 = mlp_backward(head, loss_grad(&fwd.primary, label), &layout.head[1], params, &mut g, false, true)
                .expect("input gradient requested");
            (vec![T::zero(); f1.len()], d_f2)
        }
        (None, None) => return Err(Error::TraceMismatch("trace has no classification head".into())),
    };

    let [sa1, sa2] = &trace.sa;
    let mut d_sa1 = strip_xyz(pool_backward(&trace.pools[0], &d_f1, &layout.global[0], params, &mut g), sa1.width, cfg.global_xyz);
    let d_sa2 = strip_xyz(pool_backward(&trace.pools[1], &d_f2, &layout.global[1], params, &mut g), sa2.width, cfg.global_xyz);
    let from_sa2 = sa_backward(sa2, &d_sa2, sa1.width, sa1.centers.len(), &cfg.sa2, &layout.sa[1], params, &mut g, true)
        .expect("input gradient requested");
    for (a, b) in d_sa1.iter_mut().zip(&from_sa2) {
        *a += *b;
    }
    sa_backward(sa1, &d_sa1, cfg.extra_channels(), cfg.point_count, &cfg.sa1, &layout.sa[0], params, &mut g, false);
    Ok(g)
}

/// Index of the largest primary logit, lowest index on ties.
pub fn argmax<T: Scalar>(logits: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Predicted class from the primary head.
pub fn predict<T: Scalar>(params: &ModelParams<T>, cloud: &GestureCloud<T>, cfg: &GesIDNetConfig) -> Result<usize> {
    Ok(argmax(&forward(params, cloud, cfg)?.primary))
}
