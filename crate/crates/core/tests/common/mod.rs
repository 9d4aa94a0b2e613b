//! Brute-force oracles shared by the property tests and the acceptance run.
//! Each one is written from the definition, without reusing library code.
#![allow(dead_code)]

use std::collections::HashMap;

use gestureprint::cloud::{GestureCloud, Point};
use gestureprint::preprocess::{ClusterLabeling, DenoiseConfig, NOISE};
use rand::Rng;

pub fn random_cloud(rng: &mut impl Rng, n: usize, half_width: f64) -> GestureCloud<f64> {
    GestureCloud::new(
        (0..n)
            .map(|_| {
                Point::new(
                    rng.random_range(-half_width..half_width),
                    rng.random_range(-half_width..half_width),
                    rng.random_range(-half_width..half_width),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(0.0..2.0),
                )
            })
            .collect(),
    )
}

fn dist(a: &Point<f64>, b: &Point<f64>) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt()
}

fn all_nearest(a: &GestureCloud<f64>, b: &GestureCloud<f64>) -> Vec<f64> {
    a.points
        .iter()
        .map(|p| {
            let mut best = f64::INFINITY;
            for q in &b.points {
                let d = dist(p, q);
                if d < best {
                    best = d;
                }
            }
            best
        })
        .collect()
}

pub fn hausdorff_oracle(a: &GestureCloud<f64>, b: &GestureCloud<f64>) -> f64 {
    let mut h = 0.0f64;
    for d in all_nearest(a, b).into_iter().chain(all_nearest(b, a)) {
        if d > h {
            h = d;
        }
    }
    h
}

pub fn chamfer_oracle(a: &GestureCloud<f64>, b: &GestureCloud<f64>) -> f64 {
    let mean = |v: Vec<f64>| {
        let n = v.len() as f64;
        let mut s = 0.0;
        for x in v {
            s += x;
        }
        s / n
    };
    0.5 * (mean(all_nearest(a, b)) + mean(all_nearest(b, a)))
}

/// Base-2 JSD of voxel occupancy, grid anchored at the union's minimum corner.
pub fn jsd_oracle(a: &GestureCloud<f64>, b: &GestureCloud<f64>, voxel: f64) -> f64 {
    let mut origin = [f64::INFINITY; 3];
    for p in a.points.iter().chain(&b.points) {
        origin[0] = origin[0].min(p.x);
        origin[1] = origin[1].min(p.y);
        origin[2] = origin[2].min(p.z);
    }
    let key = |p: &Point<f64>| {
        (
            ((p.x - origin[0]) / voxel).floor() as i64,
            ((p.y - origin[1]) / voxel).floor() as i64,
            ((p.z - origin[2]) / voxel).floor() as i64,
        )
    };
    let mut hist: HashMap<(i64, i64, i64), [f64; 2]> = HashMap::new();
    for p in &a.points {
        hist.entry(key(p)).or_default()[0] += 1.0 / a.len() as f64;
    }
    for p in &b.points {
        hist.entry(key(p)).or_default()[1] += 1.0 / b.len() as f64;
    }
    let mut kl_p = 0.0;
    let mut kl_q = 0.0;
    for [p, q] in hist.values() {
        let m = (p + q) / 2.0;
        if *p > 0.0 {
            kl_p += p * (p / m).ln();
        }
        if *q > 0.0 {
            kl_q += q * (q / m).ln();
        }
    }
    (kl_p + kl_q) / 2.0 / std::f64::consts::LN_2
}

/// Checks a DBSCAN labeling against the density-reachability closure: core
/// points are those with at least `n_min` points (self included) within
/// `d_max`; clusters over core points are the connected components of the
/// core-to-core neighbour graph; noise is every non-core point with no core
/// neighbour. Border points must sit in the cluster of some core neighbour.
pub fn check_dbscan(c: &GestureCloud<f64>, cfg: &DenoiseConfig, got: &ClusterLabeling) -> Result<(), String> {
    let n = c.len();
    let near = |i: usize, j: usize| dist(&c.points[i], &c.points[j]) <= cfg.d_max;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= cfg.n_min).collect();
    if core != got.core {
        return Err("core flags differ".into());
    }
    // components by repeated relabelling until stable
    let mut comp: Vec<usize> = (0..n).collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                if core[i] && core[j] && near(i, j) && comp[j] < comp[i] {
                    comp[i] = comp[j];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    for i in 0..n {
        let has_core_nb = (0..n).any(|j| core[j] && near(i, j));
        let noise = !core[i] && !has_core_nb;
        if noise != (got.labels[i] == NOISE) {
            return Err(format!("point {i}: noise expected {noise}, label {}", got.labels[i]));
        }
        if !core[i] && !noise && !(0..n).any(|j| core[j] && near(i, j) && got.labels[j] == got.labels[i]) {
            return Err(format!("border point {i} joined a cluster with no core neighbour"));
        }
    }
    for i in (0..n).filter(|&i| core[i]) {
        for j in (0..n).filter(|&j| core[j]) {
            if (comp[i] == comp[j]) != (got.labels[i] == got.labels[j]) {
                return Err(format!("core points {i} and {j} partitioned differently"));
            }
        }
    }
    let mut sizes = vec![0usize; got.cluster_sizes.len()];
    for &l in got.labels.iter().filter(|&&l| l != NOISE) {
        sizes[l as usize] += 1;
    }
    if sizes != got.cluster_sizes {
        return Err("cluster sizes do not match labels".into());
    }
    Ok(())
}

/// EER by testing every distinct score (plus one above all) as threshold and
/// solving for the crossing of the linearly interpolated FPR and FNR.
pub fn eer_oracle(genuine: &[f64], impostor: &[f64]) -> (f64, f64) {
    let fpr = |t: f64| impostor.iter().filter(|&&s| s >= t).count() as f64 / impostor.len() as f64;
    let fnr = |t: f64| genuine.iter().filter(|&&s| s < t).count() as f64 / genuine.len() as f64;
    let mut ts: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup();
    let top = *ts.last().unwrap();
    ts.push(if top == 0.0 { 1.0 } else { top + top.abs() });
    for k in 0..ts.len() {
        let d = fpr(ts[k]) - fnr(ts[k]);
        if d == 0.0 {
            return (fpr(ts[k]), ts[k]);
        }
        if d < 0.0 {
            let (t0, t1) = (ts[k - 1], ts[k]);
            let (f0, f1) = (fpr(t0), fpr(t1));
            let (n0, n1) = (fnr(t0), fnr(t1));
            // f0 + a (f1 - f0) = n0 + a (n1 - n0)
            let a = (f0 - n0) / ((f0 - n0) - (f1 - n1));
            return (f0 + a * (f1 - f0), t0 + a * (t1 - t0));
        }
    }
    unreachable!()
}

/// AUC as the probability a random positive outscores a random negative,
/// ties counting one half.
pub fn auc_oracle(scores: &[f64], positive: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &pi) in positive.iter().enumerate() {
        for (j, &pj) in positive.iter().enumerate() {
            if pi && !pj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// F1 of one class by direct counting.
pub fn f1_oracle(truth: &[usize], pred: &[usize], c: usize) -> f64 {
    let tp = truth.iter().zip(pred).filter(|(&t, &p)| t == c && p == c).count() as f64;
    let fp = truth.iter().zip(pred).filter(|(&t, &p)| t != c && p == c).count() as f64;
    let fn_ = truth.iter().zip(pred).filter(|(&t, &p)| t == c && p != c).count() as f64;
    if tp + fp + fn_ == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    }
}
