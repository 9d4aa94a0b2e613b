//! Noise canceling by density clustering and jitter augmentation.

use std::collections::VecDeque;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cloud::{GestureCloud, Point};
use crate::error::{Error, Result};
use crate::rng::rng_at;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenoiseConfig {
    /// Neighbourhood radius in meters.
    pub d_max: f64,
    /// Points (the point itself included) needed inside `d_max` for a core point.
    pub n_min: usize,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self { d_max: 1.0, n_min: 4 }
    }
}

impl DenoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_max > 0.0 && self.d_max.is_finite() && self.n_min >= 1 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("denoise config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Standard deviation of the per-axis displacement, meters.
    pub sigma: f64,
    /// Mean displacement; zero in every shipped configuration.
    pub mean: f64,
    /// Augmented copies produced per cloud.
    pub copies: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { sigma: 0.02, mean: 0.0, copies: 3 }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigma >= 0.0 && self.sigma.is_finite() && self.mean.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("augment config {self:?}")))
        }
    }
}

pub const NOISE: i64 = -1;

/// Per-point cluster ids (`NOISE` for unclustered points).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabeling {
    pub labels: Vec<i64>,
    pub cluster_sizes: Vec<usize>,
    /// Whether each point is a core point.
    pub core: Vec<bool>,
}

impl ClusterLabeling {
    pub fn num_clusters(&self) -> usize {
        self.cluster_sizes.len()
    }
}

fn neighbourhoods<T: Scalar>(points: &[Point<T>], radius: T) -> Vec<Vec<usize>> {
    let r2 = radius * radius;
    let n = points.len();
    let mut out = vec![Vec::new(); n];
    for i in 0..n {
        out[i].push(i);
        for j in i + 1..n {
            if points[i].dist_sq(&points[j]) <= r2 {
                out[i].push(j);
                out[j].push(i);
            }
        }
    }
    for list in &mut out {
        list.sort_unstable();
    }
    out
}

/// DBSCAN over xyz. Clusters are numbered in scan order of their first core
/// point; a border point joins the first cluster whose expansion reaches it.
pub fn dbscan_cluster<T: Scalar>(c: &GestureCloud<T>, cfg: &DenoiseConfig) -> Result<ClusterLabeling> {
    if c.points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    cfg.validate()?;
    let nbrs = neighbourhoods(&c.points, T::lit(cfg.d_max));
    let core: Vec<bool> = nbrs.iter().map(|l| l.len() >= cfg.n_min).collect();
    let mut labels = vec![NOISE; c.points.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();

    for seed in 0..c.points.len() {
        if labels[seed] != NOISE || !core[seed] {
            continue;
        }
        let id = sizes.len() as i64;
        let mut size = 1;
        labels[seed] = id;
        queue.push_back(seed);
        while let Some(p) = queue.pop_front() {
            for &q in &nbrs[p] {
                if labels[q] != NOISE {
                    continue;
                }
                labels[q] = id;
                size += 1;
                if core[q] {
                    queue.push_back(q);
                }
            }
        }
        sizes.push(size);
    }
    Ok(ClusterLabeling { labels, cluster_sizes: sizes, core })
}

/// Keeps the largest density cluster (lowest id on ties) and drops the rest.
pub fn keep_main_cluster<T: Scalar>(c: &GestureCloud<T>, cfg: &DenoiseConfig) -> Result<GestureCloud<T>> {
    let labeling = dbscan_cluster(c, cfg)?;
    let best = labeling
        .cluster_sizes
        .iter()
        .enumerate()
        .fold(None::<(usize, usize)>, |best, (id, &size)| match best {
            Some((_, s)) if s >= size => best,
            _ => Some((id, size)),
        });
    match best {
        Some((id, size)) if size >= cfg.n_min => {
            let points = c
                .points
                .iter()
                .zip(&labeling.labels)
                .filter(|(_, &l)| l == id as i64)
                .map(|(p, _)| *p)
                .collect();
            Ok(c.with_points(points))
        }
        _ => Err(Error::NoCluster { n_min: cfg.n_min }),
    }
}

/// Produces `cfg.copies` jittered copies of the cloud. Copy `k` draws from a
/// generator keyed by `(rng_seed, k)`; doppler and intensity are untouched.
pub fn jitter_augment<T: Scalar>(c: &GestureCloud<T>, cfg: &AugmentConfig, rng_seed: u64) -> Result<Vec<GestureCloud<T>>> {
    if c.points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    cfg.validate()?;
    let normal = Normal::new(cfg.mean, cfg.sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok((0..cfg.copies)
        .map(|k| {
            let mut rng = rng_at(rng_seed, &[k as u64]);
            let points = c
                .points
                .iter()
                .map(|p| {
                    let dx = T::lit(normal.sample(&mut rng));
                    let dy = T::lit(normal.sample(&mut rng));
                    let dz = T::lit(normal.sample(&mut rng));
                    Point { x: p.x + dx, y: p.y + dy, z: p.z + dz, ..*p }
                })
                .collect();
            c.with_points(points)
        })
        .collect())
}
