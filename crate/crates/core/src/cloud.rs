//! Point-cloud types and the geometric difference measures between gesture
//! clouds (Hausdorff, Chamfer, voxel Jensen-Shannon) plus the averaged
//! collection difference used to compare gesture sets of two users.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::scalar::Scalar;

/// One radar detection: Cartesian position in meters, radial velocity in m/s
/// and a dimensionless SNR-like intensity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
    pub z: T,
    pub doppler: T,
    pub intensity: T,
}

impl<T: Scalar> Point<T> {
    pub fn new(x: T, y: T, z: T, doppler: T, intensity: T) -> Self {
        Self { x, y, z, doppler, intensity }
    }

    /// A point at `(x, y, z)` with zero doppler and unit intensity.
    pub fn at(x: T, y: T, z: T) -> Self {
        Self::new(x, y, z, T::zero(), T::one())
    }

    pub fn xyz(&self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn to_array(&self) -> [T; 5] {
        [self.x, self.y, self.z, self.doppler, self.intensity]
    }

    pub fn from_array(a: [T; 5]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }

    /// All fields finite and intensity non-negative.
    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite()) && self.intensity >= T::zero()
    }

    #[inline]
    pub fn dist(&self, other: &Self) -> T {
        self.dist_sq(other).sqrt()
    }

    #[inline]
    pub fn dist_sq(&self, other: &Self) -> T {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }
}

/// One radar frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    pub index: u64,
    /// Seconds since stream start; `index / frame_rate` for generated streams.
    pub t: f64,
    pub points: Vec<Point<T>>,
}

/// A recorded sequence of frames at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStream<T> {
    pub frame_rate: f64,
    pub frames: Vec<Frame<T>>,
    pub meta: BTreeMap<String, String>,
}

impl<T: Scalar> FrameStream<T> {
    pub const DEFAULT_FRAME_RATE: f64 = 10.0;

    pub fn new(frame_rate: f64) -> Self {
        Self { frame_rate, frames: Vec::new(), meta: BTreeMap::new() }
    }

    /// Builds a stream whose frame `i` holds `points[i]`, indices from zero.
    pub fn from_point_lists(frame_rate: f64, points: Vec<Vec<Point<T>>>) -> Self {
        let frames = points
            .into_iter()
            .enumerate()
            .map(|(i, points)| Frame { index: i as u64, t: i as f64 / frame_rate, points })
            .collect();
        Self { frame_rate, frames, meta: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.frames.iter().map(|f| f.points.len()).collect()
    }

    /// Position of the frame carrying `index`, if any.
    pub fn position_of(&self, index: u64) -> Option<usize> {
        self.frames.binary_search_by_key(&index, |f| f.index).ok()
    }
}

/// The aggregated points of one gesture motion.
#[derive(Debug, Clone, PartialEq)]
pub struct GestureCloud<T> {
    pub points: Vec<Point<T>>,
    pub start_frame: u64,
    pub end_frame: u64,
    pub source: String,
}

impl<T: Scalar> GestureCloud<T> {
    pub fn new(points: Vec<Point<T>>) -> Self {
        Self { points, start_frame: 0, end_frame: 0, source: String::new() }
    }

    pub fn from_xyz(coords: &[[f64; 3]]) -> Self {
        Self::new(coords.iter().map(|c| Point::at(T::lit(c[0]), T::lit(c[1]), T::lit(c[2]))).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Same metadata, different points.
    pub fn with_points(&self, points: Vec<Point<T>>) -> Self {
        Self {
            points,
            start_frame: self.start_frame,
            end_frame: self.end_frame,
            source: self.source.clone(),
        }
    }

    pub fn centroid(&self) -> Result<[T; 3]> {
        if self.points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let mut acc = [T::zero(); 3];
        for p in &self.points {
            acc[0] += p.x;
            acc[1] += p.y;
            acc[2] += p.z;
        }
        let n = T::from_usize_lossy(self.points.len());
        Ok([acc[0] / n, acc[1] / n, acc[2] / n])
    }

    /// Axis-aligned bounding box `(min, max)` over xyz.
    pub fn bounds(&self) -> Result<([T; 3], [T; 3])> {
        let first = self.points.first().ok_or(Error::EmptyCloud)?;
        let mut lo = first.xyz();
        let mut hi = lo;
        for p in &self.points[1..] {
            for (k, v) in p.xyz().into_iter().enumerate() {
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
        }
        Ok((lo, hi))
    }
}

/// A set of gesture clouds, optionally sharing gesture and user labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudCollection<T> {
    pub clouds: Vec<GestureCloud<T>>,
    pub gesture_label: Option<usize>,
    pub user_label: Option<usize>,
}

impl<T> CloudCollection<T> {
    pub fn new(clouds: Vec<GestureCloud<T>>) -> Self {
        Self { clouds, gesture_label: None, user_label: None }
    }

    pub fn labeled(clouds: Vec<GestureCloud<T>>, gesture: usize, user: usize) -> Self {
        Self { clouds, gesture_label: Some(gesture), user_label: Some(user) }
    }
}

fn ensure_non_empty<T>(a: &GestureCloud<T>, b: &GestureCloud<T>) -> Result<()> {
    if a.points.is_empty() || b.points.is_empty() {
        Err(Error::EmptyCloud)
    } else {
        Ok(())
    }
}

/// Per point of `from`, the distance to its nearest neighbour in `to`.
fn nearest_distances<'a, T: Scalar>(from: &'a [Point<T>], to: &'a [Point<T>]) -> impl Iterator<Item = T> + 'a {
    from.iter().map(move |p| {
        to.iter().fold(T::infinity(), |best, q| best.min(p.dist_sq(q))).sqrt()
    })
}

fn directed_hausdorff<T: Scalar>(from: &[Point<T>], to: &[Point<T>]) -> T {
    nearest_distances(from, to).fold(T::zero(), |acc, d| acc.max(d))
}

fn directed_mean<T: Scalar>(from: &[Point<T>], to: &[Point<T>]) -> T {
    let sum = nearest_distances(from, to).fold(T::zero(), |acc, d| acc + d);
    sum / T::from_usize_lossy(from.len())
}

/// Symmetric Hausdorff distance over xyz, in meters.
pub fn hausdorff<T: Scalar>(a: &GestureCloud<T>, b: &GestureCloud<T>) -> Result<T> {
    ensure_non_empty(a, b)?;
    Ok(directed_hausdorff(&a.points, &b.points).max(directed_hausdorff(&b.points, &a.points)))
}

/// Chamfer distance: the average of the two directed mean nearest-neighbour
/// distances (unsquared).
pub fn chamfer<T: Scalar>(a: &GestureCloud<T>, b: &GestureCloud<T>) -> Result<T> {
    ensure_non_empty(a, b)?;
    let ab = directed_mean(&a.points, &b.points);
    let ba = directed_mean(&b.points, &a.points);
    Ok(T::lit(0.5) * (ab + ba))
}

/// Jensen-Shannon divergence (base 2) between the voxel occupancy
/// distributions of two clouds. The grid has edge `voxel` and is anchored at
/// the minimum corner of the union bounding box.
pub fn jsd<T: Scalar>(a: &GestureCloud<T>, b: &GestureCloud<T>, voxel: T) -> Result<T> {
    ensure_non_empty(a, b)?;
    if !(voxel > T::zero()) {
        return Err(Error::NonPositiveVoxel(voxel.as_f64()));
    }
    let (lo_a, _) = a.bounds()?;
    let (lo_b, _) = b.bounds()?;
    let origin = [lo_a[0].min(lo_b[0]), lo_a[1].min(lo_b[1]), lo_a[2].min(lo_b[2])];
    let cell = |p: &Point<T>| -> [i64; 3] {
        let c = p.xyz();
        let mut out = [0i64; 3];
        for k in 0..3 {
            out[k] = ((c[k] - origin[k]) / voxel).floor().to_i64().unwrap_or(i64::MAX);
        }
        out
    };

    let mut occupancy: BTreeMap<[i64; 3], (usize, usize)> = BTreeMap::new();
    for p in &a.points {
        occupancy.entry(cell(p)).or_default().0 += 1;
    }
    for p in &b.points {
        occupancy.entry(cell(p)).or_default().1 += 1;
    }
    if occupancy.values().all(|&(ca, cb)| ca == 0 || cb == 0) {
        return Ok(T::one());
    }

    let na = T::from_usize_lossy(a.len());
    let nb = T::from_usize_lossy(b.len());
    let half = T::lit(0.5);
    let term = |p: T, m: T| if p > T::zero() { p * (p / m).log2() } else { T::zero() };
    let mut total = T::zero();
    for &(ca, cb) in occupancy.values() {
        let p = T::from_usize_lossy(ca) / na;
        let q = T::from_usize_lossy(cb) / nb;
        let m = half * (p + q);
        total += half * (term(p, m) + term(q, m));
    }
    Ok(total.max(T::zero()).min(T::one()))
}

/// The difference measure used by [`collection_difference`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric<T> {
    Hausdorff,
    Chamfer,
    Jsd { voxel: T },
}

impl<T: Scalar> Metric<T> {
    pub const DEFAULT_VOXEL: f64 = 0.1;

    pub fn jsd_default() -> Self {
        Metric::Jsd { voxel: T::lit(Self::DEFAULT_VOXEL) }
    }

    pub fn eval(&self, a: &GestureCloud<T>, b: &GestureCloud<T>) -> Result<T> {
        match *self {
            Metric::Hausdorff => hausdorff(a, b),
            Metric::Chamfer => chamfer(a, b),
            Metric::Jsd { voxel } => jsd(a, b, voxel),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Hausdorff => "HD",
            Metric::Chamfer => "CD",
            Metric::Jsd { .. } => "JSD",
        }
    }
}

/// Mean pairwise difference between two collections of the same gesture.
///
/// Pairs where both sides are the very same cloud object are skipped, so
/// passing one collection twice yields the intra-collection spread. The mean
/// is over the pairs actually included.
pub fn collection_difference<T: Scalar>(
    c1: &CloudCollection<T>,
    c2: &CloudCollection<T>,
    metric: Metric<T>,
) -> Result<T> {
    if c1.clouds.is_empty() || c2.clouds.is_empty() {
        return Err(Error::EmptyCollection);
    }
    if let (Some(g1), Some(g2)) = (c1.gesture_label, c2.gesture_label) {
        if g1 != g2 {
            return Err(Error::LabelMismatch(g1, g2));
        }
    }
    let mut sum = T::zero();
    let mut pairs = 0usize;
    for m in &c2.clouds {
        for n in &c1.clouds {
            if std::ptr::eq(n, m) {
                continue;
            }
            sum += metric.eval(n, m)?;
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(Error::NoValidPairs);
    }
    Ok(sum / T::from_usize_lossy(pairs))
}

/// Translates xyz so the centroid sits at the origin.
pub fn normalize_center<T: Scalar>(c: &GestureCloud<T>) -> Result<GestureCloud<T>> {
    let [cx, cy, cz] = c.centroid()?;
    let points = c
        .points
        .iter()
        .map(|p| Point { x: p.x - cx, y: p.y - cy, z: p.z - cz, ..*p })
        .collect();
    Ok(c.with_points(points))
}

/// Draws exactly `p_count` points: without replacement when the cloud is large
/// enough, otherwise all originals followed by uniform draws with replacement.
pub fn resample_fixed<T: Scalar>(c: &GestureCloud<T>, p_count: usize, rng_seed: u64) -> Result<GestureCloud<T>> {
    if c.points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if p_count == 0 {
        return Err(Error::InvalidConfig("p_count must be at least 1".into()));
    }
    let mut rng = rng_from(rng_seed);
    let n = c.points.len();
    let points = if n >= p_count {
        index::sample(&mut rng, n, p_count).into_iter().map(|i| c.points[i]).collect()
    } else {
        let mut out = c.points.clone();
        out.extend((n..p_count).map(|_| c.points[rng.random_range(0..n)]));
        out
    };
    Ok(c.with_points(points))
}
