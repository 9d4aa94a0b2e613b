//! Deterministic supervised training: stratified splits, k-fold
//! cross-validation, the optimisation loop and the finite-difference
//! gradient check.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{normalize_center, resample_fixed, GestureCloud, Point};
use crate::error::{Error, Result};
use crate::gesidnet::{argmax, backward, forward, init_params, softmax, total_loss, GesIDNetConfig, ModelParams};
use crate::preprocess::{jitter_augment, AugmentConfig};
use crate::rng::{derive_seed, rng_at};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Adaptive moments with β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    Adam,
    Sgd,
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(Self::Adam),
            "sgd" => Ok(Self::Sgd),
            _ => Err(Error::InvalidConfig(format!("unknown optimizer {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine decay from `lr` at the first epoch towards zero.
    Cosine,
}

impl std::str::FromStr for LrSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Self::Constant),
            "cosine" => Ok(Self::Cosine),
            _ => Err(Error::InvalidConfig(format!("unknown schedule {s:?}"))),
        }
    }
}

impl LrSchedule {
    /// Learning rate used throughout `epoch`.
    pub fn rate(self, lr: f64, epoch: usize, epochs: usize) -> f64 {
        match self {
            Self::Constant => lr,
            Self::Cosine => 0.5 * lr * (1.0 + (std::f64::consts::PI * epoch as f64 / epochs as f64).cos()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub split_ratio: f64,
    pub folds: usize,
    pub optimizer: Optimizer,
    #[serde(default)]
    pub schedule: LrSchedule,
    pub augment: AugmentConfig,
    /// Set to false to train on the original clouds only.
    pub augment_enabled: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 60,
            batch: 16,
            seed: 0,
            split_ratio: 0.8,
            folds: 5,
            optimizer: Optimizer::Adam,
            schedule: LrSchedule::Constant,
            augment: AugmentConfig::default(),
            augment_enabled: true,
        }
    }
}

impl TrainConfig {
    /// `lr = 0` is accepted so a run can be checked for a frozen model.
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("lr must be non-negative, got {}", self.lr)));
        }
        if self.epochs == 0 || self.batch == 0 {
            return Err(Error::InvalidConfig("epochs and batch must be positive".into()));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::InvalidConfig(format!("split_ratio must lie in (0, 1), got {}", self.split_ratio)));
        }
        if self.folds < 2 {
            return Err(Error::InvalidConfig(format!("folds must be at least 2, got {}", self.folds)));
        }
        self.augment.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean total loss over the epoch's training items.
    pub loss: f64,
    pub loss_primary: f64,
    pub loss_auxiliary: f64,
    /// Fraction of items whose primary prediction was correct before the
    /// item's update step.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub test_accuracy: Option<f64>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,L,L1,L2,acc\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{},{},{},{}\n", e.epoch, e.loss, e.loss_primary, e.loss_auxiliary, e.accuracy));
        }
        out
    }
}

fn by_class(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        classes.entry(l).or_default().push(i);
    }
    classes
}

/// Per-class shuffled split. Each class sends `ceil(ratio * n)` samples to the
/// train side (at least one, and at least one left for testing). Returns
/// sorted `(train, test)` index lists.
pub fn stratified_split(labels: &[usize], ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidConfig(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut idx) in by_class(labels) {
        let n = idx.len();
        if n < 2 {
            return Err(Error::ClassTooSmall { class, count: n, needed: 2 });
        }
        idx.shuffle(&mut rng_at(seed, &[class as u64]));
        let n_train = ((ratio * n as f64 - 1e-9).ceil() as usize).clamp(1, n - 1);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Stratified k-fold: within each shuffled class, element `i` lands in test
/// fold `i % folds`. Returns sorted `(train, test)` pairs.
pub fn kfold(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if folds < 2 {
        return Err(Error::InvalidConfig(format!("folds must be at least 2, got {folds}")));
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut tests = vec![Vec::new(); folds];
    for (class, mut idx) in by_class(labels) {
        if idx.len() < folds {
            return Err(Error::ClassTooSmall { class, count: idx.len(), needed: folds });
        }
        idx.shuffle(&mut rng_at(seed, &[class as u64]));
        for (i, s) in idx.into_iter().enumerate() {
            tests[i % folds].push(s);
        }
    }
    Ok(tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let train = (0..labels.len()).filter(|i| test.binary_search(i).is_err()).collect();
            (train, test)
        })
        .collect())
}

/// Centers a cloud and resamples it to the network's point count.
pub fn prepare_input<T: Scalar>(cloud: &GestureCloud<T>, point_count: usize, seed: u64) -> Result<GestureCloud<T>> {
    resample_fixed(&normalize_center(cloud)?, point_count, seed)
}

fn check_dataset<T>(clouds: &[GestureCloud<T>], labels: &[usize], net_cfg: &GesIDNetConfig) -> Result<()> {
    if clouds.len() != labels.len() {
        return Err(Error::LengthMismatch(format!("{} clouds, {} labels", clouds.len(), labels.len())));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= net_cfg.num_classes) {
        return Err(Error::LabelOutOfRange { label, classes: net_cfg.num_classes });
    }
    if by_class(labels).len() < 2 {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

struct Adam<T> {
    m: ModelParams<T>,
    v: ModelParams<T>,
    step: i32,
}

impl<T: Scalar> Adam<T> {
    fn update(&mut self, params: &mut ModelParams<T>, grad: &ModelParams<T>, lr: T) {
        let (b1, b2, eps) = (T::lit(0.9), T::lit(0.999), T::lit(1e-8));
        self.step += 1;
        let c1 = T::one() - b1.powi(self.step);
        let c2 = T::one() - b2.powi(self.step);
        for ((pb, gb), (mb, vb)) in params.blocks.iter_mut().zip(&grad.blocks).zip(self.m.blocks.iter_mut().zip(&mut self.v.blocks)) {
            for (((p, &g), m), v) in pb.data.iter_mut().zip(&gb.data).zip(&mut mb.data).zip(&mut vb.data) {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
}

struct ItemResult<T> {
    grad: ModelParams<T>,
    loss: [f64; 3],
    correct: bool,
}

fn train_item<T: Scalar>(params: &ModelParams<T>, cloud: &GestureCloud<T>, label: usize, cfg: &GesIDNetConfig) -> Result<ItemResult<T>> {
    let fwd = forward(params, cloud, cfg)?;
    let losses = total_loss(&fwd.primary, fwd.auxiliary.as_deref(), label)?;
    let grad = backward(params, &fwd, label, cfg)?;
    Ok(ItemResult {
        grad,
        loss: [losses.total.as_f64(), losses.primary.as_f64(), losses.auxiliary.as_f64()],
        correct: argmax(&fwd.primary) == label,
    })
}

/// Expands each training sample into its centered original plus (when
/// enabled) jittered copies, at full size. Augmentation only ever sees the
/// clouds passed here, so nothing crosses a split made beforehand.
pub fn training_items<T: Scalar>(
    clouds: &[GestureCloud<T>],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<Vec<(GestureCloud<T>, usize)>> {
    let mut items = Vec::new();
    for (i, (c, &label)) in clouds.iter().zip(labels).enumerate() {
        let centered = normalize_center(c)?;
        let mut variants = vec![centered.clone()];
        if cfg.augment_enabled {
            variants.extend(jitter_augment(&centered, &cfg.augment, derive_seed(cfg.seed, &[1, i as u64]))?);
        }
        items.extend(variants.into_iter().map(|v| (v, label)));
    }
    Ok(items)
}

/// Trains a network from a fresh initialisation. Clouds are denoised
/// gesture clouds; centering, augmentation and resampling happen here.
pub fn train<T: Scalar>(
    clouds: &[GestureCloud<T>],
    labels: &[usize],
    cfg: &TrainConfig,
    net_cfg: &GesIDNetConfig,
) -> Result<(ModelParams<T>, TrainHistory)> {
    let params = init_params(net_cfg, derive_seed(cfg.seed, &[0]))?;
    train_from(params, clouds, labels, cfg, net_cfg)
}

/// As [`train`], starting from the given parameters.
pub fn train_from<T: Scalar>(
    mut params: ModelParams<T>,
    clouds: &[GestureCloud<T>],
    labels: &[usize],
    cfg: &TrainConfig,
    net_cfg: &GesIDNetConfig,
) -> Result<(ModelParams<T>, TrainHistory)> {
    cfg.validate()?;
    net_cfg.validate()?;
    params.check_shapes(net_cfg)?;
    check_dataset(clouds, labels, net_cfg)?;
    let items = training_items(clouds, labels, cfg)?;
    let mut adam = Adam { m: params.zeros_like(), v: params.zeros_like(), step: 0 };
    let mut history = TrainHistory::default();

    for epoch in 0..cfg.epochs {
        let lr = T::lit(cfg.schedule.rate(cfg.lr, epoch, cfg.epochs));
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut rng_at(cfg.seed, &[3, epoch as u64]));
        let mut item_loss = vec![[0.0; 3]; items.len()];
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch) {
            let results: Vec<Result<ItemResult<T>>> =
                batch
                    .par_iter()
                    .map(|&i| {
                        // a fresh subset of points every epoch
                        let seed = derive_seed(cfg.seed, &[2, i as u64, epoch as u64]);
                        let input = resample_fixed(&items[i].0, net_cfg.point_count, seed)?;
                        train_item(&params, &input, items[i].1, net_cfg)
                    })
                    .collect();
            let mut grad = params.zeros_like();
            for (&i, r) in batch.iter().zip(results) {
                let r = r.map_err(|e| match e {
                    Error::NonFiniteActivation(_) => Error::DivergenceDetected { epoch, loss: f64::NAN },
                    e => e,
                })?;
                if !r.loss[0].is_finite() {
                    return Err(Error::DivergenceDetected { epoch, loss: r.loss[0] });
                }
                grad.add_scaled(&r.grad, T::one());
                item_loss[i] = r.loss;
                correct += r.correct as usize;
            }
            grad.scale(T::one() / T::from_usize_lossy(batch.len()));
            match cfg.optimizer {
                Optimizer::Adam => adam.update(&mut params, &grad, lr),
                Optimizer::Sgd => params.add_scaled(&grad, -lr),
            }
            if !params.is_finite() {
                return Err(Error::DivergenceDetected { epoch, loss: f64::NAN });
            }
        }
        let n = items.len() as f64;
        let sum = |k: usize| item_loss.iter().map(|l| l[k]).sum::<f64>() / n;
        history.epochs.push(EpochStats {
            epoch,
            loss: sum(0),
            loss_primary: sum(1),
            loss_auxiliary: sum(2),
            accuracy: correct as f64 / n,
        });
    }
    Ok((params, history))
}

/// Primary-head predictions and softmax scores for each cloud. Cloud `i` is
/// resampled with a seed derived from `(seed, i)`.
pub fn predict_all<T: Scalar>(
    params: &ModelParams<T>,
    clouds: &[GestureCloud<T>],
    net_cfg: &GesIDNetConfig,
    seed: u64,
) -> Result<Vec<(usize, Vec<f64>)>> {
    clouds
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let input = prepare_input(c, net_cfg.point_count, derive_seed(seed, &[i as u64]))?;
            let fwd = forward(params, &input, net_cfg)?;
            let scores = softmax(&fwd.primary).into_iter().map(Scalar::as_f64).collect();
            Ok((argmax(&fwd.primary), scores))
        })
        .collect()
}

/// Fraction of clouds whose prediction equals the label.
pub fn accuracy<T: Scalar>(
    params: &ModelParams<T>,
    clouds: &[GestureCloud<T>],
    labels: &[usize],
    net_cfg: &GesIDNetConfig,
    seed: u64,
) -> Result<f64> {
    if clouds.len() != labels.len() {
        return Err(Error::LengthMismatch(format!("{} clouds, {} labels", clouds.len(), labels.len())));
    }
    if clouds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let preds = predict_all(params, clouds, net_cfg, seed)?;
    let hits = preds.iter().zip(labels).filter(|((p, _), l)| p == *l).count();
    Ok(hits as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCheck {
    pub name: String,
    pub checked: usize,
    /// Entries whose initial step straddled a kink and was shrunk.
    pub refined: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;
const ENTRIES_PER_BLOCK: usize = 12;

/// Random cloud in the unit cube around the origin, random label and
/// parameters with small random biases so no unit starts exactly at a kink.
pub fn grad_check_fixture(net_cfg: &GesIDNetConfig, seed: u64) -> Result<(ModelParams<f64>, GestureCloud<f64>, usize)> {
    let mut params: ModelParams<f64> = init_params(net_cfg, derive_seed(seed, &[0]))?;
    let mut rng = rng_at(seed, &[1]);
    for b in params.blocks.iter_mut().filter(|b| b.name.ends_with(".bias")) {
        for v in &mut b.data {
            *v = rng.random_range(-0.1..0.1);
        }
    }
    let normal = Normal::new(0.0, 0.3).expect("valid normal");
    let points = (0..net_cfg.point_count)
        .map(|_| {
            Point::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                normal.sample(&mut rng),
                rng.random_range(0.2..1.5),
            )
        })
        .collect();
    let label = rng.random_range(0..net_cfg.num_classes);
    Ok((params, GestureCloud::new(points), label))
}

/// Compares analytic gradients with central finite differences on the
/// fixture drawn from `seed`. The step is `1e-4 * max(1, |θ|)`. A central
/// difference is trusted only when the one at a tenfold smaller step agrees
/// with it; otherwise a ReLU or max-pool kink lies inside the step and the
/// smaller steps are used instead.
pub fn gradient_check(net_cfg: &GesIDNetConfig, seed: u64) -> Result<GradCheckReport> {
    let (params, cloud, label) = grad_check_fixture(net_cfg, seed)?;
    gradient_check_with(net_cfg, &params, &cloud, label, seed, |_| {})
}

/// Gradient check on explicit inputs. `tamper` may modify the analytic
/// gradient before comparison, which lets tests confirm the check fails.
pub fn gradient_check_with(
    net_cfg: &GesIDNetConfig,
    params: &ModelParams<f64>,
    cloud: &GestureCloud<f64>,
    label: usize,
    seed: u64,
    tamper: impl FnOnce(&mut ModelParams<f64>),
) -> Result<GradCheckReport> {
    let loss = |p: &ModelParams<f64>| -> Result<f64> {
        let fwd = forward(p, cloud, net_cfg)?;
        Ok(total_loss(&fwd.primary, fwd.auxiliary.as_deref(), label)?.total)
    };
    let fwd = forward(params, cloud, net_cfg)?;
    let mut analytic = backward(params, &fwd, label, net_cfg)?;
    tamper(&mut analytic);

    let mut rng = rng_at(seed, &[2]);
    let mut probe = params.clone();
    let mut blocks = Vec::with_capacity(params.blocks.len());
    for (bi, block) in params.blocks.iter().enumerate() {
        let n = block.data.len();
        let entries: Vec<usize> = if block.name.starts_with("gate") || n <= ENTRIES_PER_BLOCK {
            (0..n).collect()
        } else {
            let mut e = rand::seq::index::sample(&mut rng, n, ENTRIES_PER_BLOCK).into_vec();
            e.sort_unstable();
            e
        };
        let mut max_rel: f64 = 0.0;
        let mut refined = 0;
        for &k in &entries {
            let theta = block.data[k];
            let mut central = |scale: f64| -> Result<f64> {
                let h = scale * theta.abs().max(1.0);
                probe.blocks[bi].data[k] = theta + h;
                let up = loss(&probe)?;
                probe.blocks[bi].data[k] = theta - h;
                let down = loss(&probe)?;
                probe.blocks[bi].data[k] = theta;
                Ok((up - down) / (2.0 * h))
            };
            let agree = |x: f64, y: f64| (x - y).abs() <= 1e-5 * x.abs().max(y.abs()) + 1e-10;
            let mut numeric = central(1e-4)?;
            let finer = central(1e-5)?;
            if !agree(numeric, finer) {
                refined += 1;
                let finest = central(1e-6)?;
                numeric = if agree(finer, finest) { finer } else { finest };
            }
            let a = analytic.blocks[bi].data[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            max_rel = max_rel.max(rel);
        }
        blocks.push(BlockCheck { name: block.name.clone(), checked: entries.len(), refined, max_rel_error: max_rel });
    }
    let max_rel_error = blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { blocks, max_rel_error, tolerance: GRAD_CHECK_TOLERANCE, passed: max_rel_error < GRAD_CHECK_TOLERANCE })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_eight_two() {
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let (train, test) = stratified_split(&labels, 0.8, 4).unwrap();
        assert_eq!(train.len(), 24);
        assert_eq!(test.len(), 6);
        for c in 0..3 {
            assert_eq!(test.iter().filter(|&&i| labels[i] == c).count(), 2);
        }
        assert_eq!((train.clone(), test.clone()), stratified_split(&labels, 0.8, 4).unwrap());
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn split_rounds_toward_train() {
        // 3 per class at 0.5 → 2 train, 1 test
        let labels = [0, 0, 0, 1, 1, 1];
        let (train, test) = stratified_split(&labels, 0.5, 0).unwrap();
        assert_eq!((train.len(), test.len()), (4, 2));
        assert_eq!(stratified_split(&[0, 0, 1], 0.8, 0), Err(Error::ClassTooSmall { class: 1, count: 1, needed: 2 }));
    }

    #[test]
    fn kfold_partitions() {
        let labels: Vec<usize> = (0..50).map(|i| i % 2).collect();
        let folds = kfold(&labels, 5, 9).unwrap();
        assert_eq!(folds.len(), 5);
        let mut seen = vec![0; 50];
        for (train, test) in &folds {
            assert_eq!(test.len(), 10);
            assert_eq!(test.iter().filter(|&&i| labels[i] == 0).count(), 5);
            assert_eq!(train.len() + test.len(), 50);
            for &i in test {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&s| s == 1));
        assert!(matches!(kfold(&[0, 0, 1, 1], 3, 0), Err(Error::ClassTooSmall { .. })));
    }

    #[test]
    fn history_csv() {
        let h = TrainHistory {
            epochs: vec![EpochStats { epoch: 0, loss: 1.5, loss_primary: 1.0, loss_auxiliary: 0.5, accuracy: 0.25 }],
            test_accuracy: None,
        };
        assert_eq!(h.to_csv(), "epoch,L,L1,L2,acc\n0,1.5,1,0.5,0.25\n");
    }

    #[test]
    fn optimizer_names() {
        assert_eq!("adam".parse::<Optimizer>().unwrap(), Optimizer::Adam);
        assert_eq!("sgd".parse::<Optimizer>().unwrap(), Optimizer::Sgd);
        assert!("rmsprop".parse::<Optimizer>().is_err());
    }
}
