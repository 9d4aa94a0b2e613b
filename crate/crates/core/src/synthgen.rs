//! Synthetic radar streams with ground truth: parametric gestures performed
//! by parametric users over sparse background clutter.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{Frame, FrameStream, GestureCloud, Point};
use crate::error::{Error, Result};
use crate::preprocess::{keep_main_cluster, DenoiseConfig};
use crate::rng::{derive_seed, rng_at};
use crate::segmenter::{aggregate_segment, segment_stream, SegmenterConfig};

/// Where users stand relative to the radar, meters.
pub const USER_ANCHOR: [f64; 3] = [0.0, 2.0, 0.0];
/// Largest boundary error tolerated when matching segments to the oracle.
pub const BOUNDARY_TOLERANCE: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: usize,
    /// Range-of-motion multiplier.
    pub motion_scale: f64,
    /// Tempo multiplier; durations divide by it, velocities multiply.
    pub speed_factor: f64,
    pub center_offset: [f64; 3],
    /// Extra per-user scatter, meters.
    pub style_jitter: f64,
}

impl UserProfile {
    pub fn validate(&self) -> Result<()> {
        let finite = self.center_offset.iter().all(|v| v.is_finite()) && self.style_jitter.is_finite();
        if self.motion_scale > 0.0 && self.speed_factor > 0.0 && self.style_jitter >= 0.0 && finite {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("user profile {self:?}")))
        }
    }

    /// `n` users with motion scales evenly spaced over `[lo, hi]`. Speed
    /// factors (evenly spaced in `[0.7, 1.5]`) and tremor (evenly spaced in
    /// `[0, 0.04]` m) are assigned by seeded permutations; offsets are drawn
    /// from the seed.
    pub fn spaced(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<Self> {
        let step = |i: usize, a: f64, b: f64| if n > 1 { a + (b - a) * i as f64 / (n - 1) as f64 } else { (a + b) / 2.0 };
        let mut rng = rng_at(seed, &[0]);
        let mut speeds: Vec<f64> = (0..n).map(|i| step(i, 0.7, 1.5)).collect();
        speeds.shuffle(&mut rng);
        let mut jitters: Vec<f64> = (0..n).map(|i| step(i, 0.0, 0.04)).collect();
        jitters.shuffle(&mut rng);
        (0..n)
            .map(|i| UserProfile {
                user_id: i,
                motion_scale: step(i, lo, hi),
                speed_factor: speeds[i],
                center_offset: [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.1..0.1)],
                style_jitter: jitters[i],
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trajectory {
    Line,
    Arc,
    Zigzag,
    Push,
    Circle,
}

impl Trajectory {
    pub const ALL: [Trajectory; 5] = [Self::Line, Self::Arc, Self::Zigzag, Self::Push, Self::Circle];

    /// Position at phase `u ∈ [0, 1]` for unit motion scale: x lateral,
    /// y away from the radar, z up; roughly half a meter across.
    pub fn at(self, u: f64) -> [f64; 3] {
        match self {
            Self::Line => [0.8 * u - 0.4, 0.0, 0.08 * u],
            Self::Arc => [0.4 * (PI * u).cos(), 0.0, 0.4 * (PI * u).sin() - 0.15],
            Self::Zigzag => {
                let tri = 1.0 - 2.0 * ((3.0 * u).fract() - 0.5).abs();
                [0.8 * u - 0.4, 0.0, 0.25 * tri]
            }
            Self::Push => [0.0, -0.5 * u + 0.25, 0.08 * (PI * u).sin()],
            Self::Circle => [0.3 * (2.0 * PI * u).cos(), 0.0, 0.3 * (2.0 * PI * u).sin()],
        }
    }

    /// Base duration in frames at 10 fps.
    pub fn base_duration(self) -> usize {
        match self {
            Self::Line => 18,
            Self::Arc => 22,
            Self::Zigzag => 28,
            Self::Push => 15,
            Self::Circle => 26,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureTemplate {
    pub gesture_id: usize,
    pub trajectory: Trajectory,
    /// Rotation of the trajectory about the vertical axis, radians.
    pub yaw: f64,
    /// Frames at unit speed.
    pub duration: usize,
    /// Point scatter around the trajectory, meters at unit motion scale.
    pub spread: f64,
}

/// Fewest frames a gesture may last: one full motion window.
pub const MIN_DURATION: usize = 10;

impl GestureTemplate {
    pub fn validate(&self) -> Result<()> {
        if self.duration >= MIN_DURATION && self.spread >= 0.0 && self.yaw.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("gesture template {self:?}")))
        }
    }

    /// `n` templates cycling through the trajectory families; each further
    /// cycle turns the gesture plane by 45 degrees.
    pub fn standard(n: usize) -> Vec<Self> {
        (0..n)
            .map(|i| {
                let trajectory = Trajectory::ALL[i % 5];
                GestureTemplate {
                    gesture_id: i,
                    trajectory,
                    yaw: (i / 5) as f64 * PI / 4.0,
                    duration: trajectory.base_duration(),
                    spread: 0.03,
                }
            })
            .collect()
    }

    fn position(&self, u: f64) -> [f64; 3] {
        let [x, y, z] = self.trajectory.at(u);
        let (s, c) = self.yaw.sin_cos();
        [c * x - s * y, s * x + c * y, z]
    }

    /// Frames taken by `user`.
    pub fn frames_for(&self, user: &UserProfile) -> usize {
        ((self.duration as f64 / user.speed_factor).round() as usize).max(MIN_DURATION)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Mean gesture points per in-gesture frame.
    pub points_per_frame: f64,
    /// Mean background points per frame.
    pub background_rate: f64,
    /// Std of the doppler measurement noise on gesture points, m/s.
    pub doppler_noise: f64,
    /// Std of background doppler, m/s.
    pub background_doppler: f64,
    pub intensity_mean: f64,
    pub intensity_std: f64,
    pub box_min: [f64; 3],
    pub box_max: [f64; 3],
    pub frame_rate: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            points_per_frame: 20.0,
            background_rate: 2.0,
            doppler_noise: 0.05,
            background_doppler: 0.1,
            intensity_mean: 1.0,
            intensity_std: 0.3,
            box_min: [-2.0, 0.0, -1.0],
            box_max: [2.0, 4.0, 1.0],
            frame_rate: 10.0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.points_per_frame > 0.0
            && self.background_rate >= 0.0
            && self.doppler_noise >= 0.0
            && self.background_doppler >= 0.0
            && self.intensity_std >= 0.0
            && self.frame_rate > 0.0
            && (0..3).all(|k| self.box_min[k] < self.box_max[k]);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("noise config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledEvent {
    /// Index into the user list.
    pub user: usize,
    /// Index into the template list.
    pub gesture: usize,
    pub start_frame: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub events: Vec<ScheduledEvent>,
    pub total_frames: u64,
}

impl Schedule {
    /// Performs `pairs` (user, gesture) back to back after `lead_in` idle
    /// frames, separated and followed by idle gaps drawn from `gap`.
    pub fn sequential(
        pairs: &[(usize, usize)],
        users: &[UserProfile],
        templates: &[GestureTemplate],
        lead_in: u64,
        gap: (u64, u64),
        seed: u64,
    ) -> Result<Self> {
        if gap.0 > gap.1 {
            return Err(Error::BadSchedule(format!("gap range {gap:?}")));
        }
        let mut rng = rng_at(seed, &[]);
        let mut t = lead_in;
        let mut events = Vec::with_capacity(pairs.len());
        for &(user, gesture) in pairs {
            let (u, g) = lookup(users, templates, user, gesture)?;
            events.push(ScheduledEvent { user, gesture, start_frame: t });
            t += g.frames_for(u) as u64 + rng.random_range(gap.0..=gap.1);
        }
        Ok(Self { events, total_frames: t })
    }
}

fn lookup<'a>(
    users: &'a [UserProfile],
    templates: &'a [GestureTemplate],
    user: usize,
    gesture: usize,
) -> Result<(&'a UserProfile, &'a GestureTemplate)> {
    match (users.get(user), templates.get(gesture)) {
        (Some(u), Some(g)) => Ok((u, g)),
        _ => Err(Error::BadSchedule(format!("event refers to user {user} / gesture {gesture}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Gesture,
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedEvent {
    pub start_frame: u64,
    pub end_frame: u64,
    pub gesture: usize,
    pub user: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleAnnotations {
    pub events: Vec<AnnotatedEvent>,
    /// `provenance[frame][point]`.
    pub provenance: Vec<Vec<Provenance>>,
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn intensity(rng: &mut impl rand::Rng, noise: &NoiseConfig) -> f64 {
    Normal::new(noise.intensity_mean, noise.intensity_std).expect("valid std").sample(rng).abs()
}

/// Renders a schedule into a frame stream and its ground truth. Frame `f`
/// draws from its own generator, keyed by `(seed, f)`.
pub fn synth_stream(
    users: &[UserProfile],
    templates: &[GestureTemplate],
    schedule: &Schedule,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<(FrameStream<f64>, OracleAnnotations)> {
    if users.is_empty() || templates.is_empty() {
        return Err(Error::InvalidConfig("synthesis needs at least one user and one template".into()));
    }
    noise.validate()?;
    users.iter().try_for_each(UserProfile::validate)?;
    templates.iter().try_for_each(GestureTemplate::validate)?;

    let mut events: Vec<AnnotatedEvent> = Vec::with_capacity(schedule.events.len());
    let mut by_start = schedule.events.clone();
    by_start.sort_by_key(|e| e.start_frame);
    for e in &by_start {
        let (u, g) = lookup(users, templates, e.user, e.gesture)?;
        let end = e.start_frame + g.frames_for(u) as u64 - 1;
        if let Some(prev) = events.last() {
            if e.start_frame <= prev.end_frame {
                return Err(Error::BadSchedule(format!(
                    "event at frame {} overlaps the one spanning {}..={}",
                    e.start_frame, prev.start_frame, prev.end_frame
                )));
            }
        }
        if end >= schedule.total_frames {
            return Err(Error::BadSchedule(format!("event ending at frame {end} exceeds {} frames", schedule.total_frames)));
        }
        events.push(AnnotatedEvent { start_frame: e.start_frame, end_frame: end, gesture: e.gesture, user: e.user });
    }

    let active = |f: u64| -> Option<usize> {
        let i = events.partition_point(|e| e.start_frame <= f);
        (i > 0 && events[i - 1].end_frame >= f).then(|| i - 1)
    };
    let gesture_count = Poisson::new(noise.points_per_frame).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let background_count = (noise.background_rate > 0.0)
        .then(|| Poisson::new(noise.background_rate).map_err(|e| Error::InvalidConfig(e.to_string())))
        .transpose()?;

    let rendered: Vec<(Frame<f64>, Vec<Provenance>)> = (0..schedule.total_frames)
        .into_par_iter()
        .map(|f| {
            let mut rng = rng_at(seed, &[f]);
            let mut points = Vec::new();
            let mut prov = Vec::new();
            if let Some(ei) = active(f) {
                let ev = &events[ei];
                let user = &users[ev.user];
                let tpl = &templates[ev.gesture];
                let frames = (ev.end_frame - ev.start_frame + 1) as f64;
                let u = (f - ev.start_frame) as f64 / (frames - 1.0).max(1.0);
                let anchor = add(USER_ANCHOR, user.center_offset);
                let scaled = |u: f64| tpl.position(u).map(|v| v * user.motion_scale);
                let center = add(anchor, scaled(u));
                // velocity at unit tempo, then sped up by the user's factor
                let du = 1e-3;
                let (a, b) = (scaled((u - du).max(0.0)), scaled((u + du).min(1.0)));
                let span = (u + du).min(1.0) - (u - du).max(0.0);
                let seconds = tpl.duration as f64 / noise.frame_rate;
                let vel: Vec<f64> = (0..3).map(|k| (b[k] - a[k]) / span / seconds * user.speed_factor).collect();
                let norm = center.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
                let radial = (0..3).map(|k| vel[k] * center[k] / norm).sum::<f64>();
                let scatter = Normal::new(0.0, tpl.spread * user.motion_scale + user.style_jitter).expect("valid std");
                let dop = Normal::new(radial, noise.doppler_noise).expect("valid std");
                let k = gesture_count.sample(&mut rng) as usize;
                for _ in 0..k {
                    let p = [0, 1, 2].map(|j| center[j] + scatter.sample(&mut rng));
                    points.push(Point::new(p[0], p[1], p[2], dop.sample(&mut rng), intensity(&mut rng, noise)));
                    prov.push(Provenance::Gesture);
                }
            }
            if let Some(bg) = &background_count {
                let dop = Normal::new(0.0, noise.background_doppler).expect("valid std");
                let b = bg.sample(&mut rng) as usize;
                for _ in 0..b {
                    let p = [0, 1, 2].map(|j| rng.random_range(noise.box_min[j]..noise.box_max[j]));
                    points.push(Point::new(p[0], p[1], p[2], dop.sample(&mut rng), intensity(&mut rng, noise)));
                    prov.push(Provenance::Background);
                }
            }
            (Frame { index: f, t: f as f64 / noise.frame_rate, points }, prov)
        })
        .collect();

    let mut stream = FrameStream::new(noise.frame_rate);
    let mut provenance = Vec::with_capacity(rendered.len());
    for (frame, prov) in rendered {
        stream.frames.push(frame);
        provenance.push(prov);
    }
    stream.meta.insert("generator".into(), "synthgen".into());
    stream.meta.insert("seed".into(), seed.to_string());
    Ok((stream, OracleAnnotations { events, provenance }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCloud {
    /// Denoised gesture cloud (main cluster only), in radar coordinates.
    pub cloud: GestureCloud<f64>,
    pub gesture: usize,
    pub user: usize,
    /// Index of the source stream.
    pub stream: usize,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub users: Vec<UserProfile>,
    pub templates: Vec<GestureTemplate>,
    pub streams: Vec<(FrameStream<f64>, OracleAnnotations)>,
    pub samples: Vec<LabeledCloud>,
}

impl SynthDataset {
    pub fn gesture_labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.gesture).collect()
    }

    pub fn user_labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.user).collect()
    }

    pub fn clouds(&self) -> Vec<GestureCloud<f64>> {
        self.samples.iter().map(|s| s.cloud.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub samples_per_cell: usize,
    pub noise: NoiseConfig,
    pub segmenter: SegmenterConfig,
    pub denoise: DenoiseConfig,
    /// Idle frames before the first event of a stream.
    pub lead_in: u64,
    /// Inclusive range of idle frames between events.
    pub gap: (u64, u64),
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            samples_per_cell: 20,
            noise: NoiseConfig::default(),
            segmenter: SegmenterConfig::default(),
            denoise: DenoiseConfig::default(),
            lead_in: 20,
            gap: (20, 40),
        }
    }
}

/// Segments a stream and pairs every segment with an oracle event whose
/// boundaries agree within [`BOUNDARY_TOLERANCE`] frames.
pub fn verify_segments(
    stream: &FrameStream<f64>,
    oracle: &OracleAnnotations,
    cfg: &SegmenterConfig,
) -> Result<Vec<(crate::segmenter::Segment, AnnotatedEvent)>> {
    let segments = segment_stream(stream, cfg)?;
    if segments.len() != oracle.events.len() {
        return Err(Error::OracleMismatch(format!("{} segments for {} events", segments.len(), oracle.events.len())));
    }
    segments
        .into_iter()
        .zip(oracle.events.iter().copied())
        .map(|(s, e)| {
            if s.start_frame.abs_diff(e.start_frame) > BOUNDARY_TOLERANCE || s.end_frame.abs_diff(e.end_frame) > BOUNDARY_TOLERANCE {
                Err(Error::OracleMismatch(format!(
                    "segment {}..={} against event {}..={}",
                    s.start_frame, s.end_frame, e.start_frame, e.end_frame
                )))
            } else {
                Ok((s, e))
            }
        })
        .collect()
}

/// `n_users × n_gestures × samples_per_cell` labeled clouds with default
/// settings and users spread over motion scales `[0.7, 1.3]`.
pub fn synth_dataset(n_users: usize, n_gestures: usize, samples_per_cell: usize, seed: u64) -> Result<SynthDataset> {
    if n_users < 2 || n_gestures < 2 {
        return Err(Error::InvalidConfig("need at least two users and two gestures".into()));
    }
    let users = UserProfile::spaced(n_users, 0.7, 1.3, derive_seed(seed, &[0]));
    let templates = GestureTemplate::standard(n_gestures);
    synth_dataset_with(users, templates, &DatasetSpec { samples_per_cell, ..Default::default() }, seed)
}

/// Each stream holds one repetition of every gesture by one user, in a
/// seeded order. Streams are segmented, checked against the oracle and the
/// segments denoised.
pub fn synth_dataset_with(
    users: Vec<UserProfile>,
    templates: Vec<GestureTemplate>,
    spec: &DatasetSpec,
    seed: u64,
) -> Result<SynthDataset> {
    if users.len() < 2 || templates.len() < 2 {
        return Err(Error::InvalidConfig("need at least two users and two gestures".into()));
    }
    if spec.samples_per_cell == 0 {
        return Err(Error::InvalidConfig("samples_per_cell must be positive".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..users.len()).flat_map(|u| (0..spec.samples_per_cell).map(move |r| (u, r))).collect();
    let per_stream: Vec<((FrameStream<f64>, OracleAnnotations), Vec<LabeledCloud>)> = jobs
        .par_iter()
        .enumerate()
        .map(|(si, &(u, r))| {
            let mut order: Vec<usize> = (0..templates.len()).collect();
            order.shuffle(&mut rng_at(seed, &[1, u as u64, r as u64]));
            let pairs: Vec<(usize, usize)> = order.iter().map(|&g| (u, g)).collect();
            let schedule = Schedule::sequential(&pairs, &users, &templates, spec.lead_in, spec.gap, derive_seed(seed, &[2, si as u64]))?;
            let (mut stream, oracle) = synth_stream(&users, &templates, &schedule, &spec.noise, derive_seed(seed, &[3, si as u64]))?;
            stream.meta.insert("source".into(), format!("user{u}-rep{r}"));
            let matched = verify_segments(&stream, &oracle, &spec.segmenter)?;
            let samples = matched
                .iter()
                .map(|(seg, ev)| {
                    let cloud = keep_main_cluster(&aggregate_segment(&stream, seg)?, &spec.denoise)?;
                    Ok(LabeledCloud { cloud, gesture: ev.gesture, user: ev.user, stream: si })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(((stream, oracle), samples))
        })
        .collect::<Result<_>>()?;
    let mut streams = Vec::with_capacity(per_stream.len());
    let mut samples = Vec::new();
    for (s, c) in per_stream {
        streams.push(s);
        samples.extend(c);
    }
    Ok(SynthDataset { users, templates, streams, samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Vec<UserProfile>, Vec<GestureTemplate>) {
        (UserProfile::spaced(2, 0.8, 1.2, 1), GestureTemplate::standard(3))
    }

    #[test]
    fn three_events_three_ranges() {
        let (users, templates) = setup();
        let s = Schedule::sequential(&[(0, 0), (1, 1), (0, 2)], &users, &templates, 20, (20, 40), 3).unwrap();
        let (stream, oracle) = synth_stream(&users, &templates, &s, &NoiseConfig::default(), 5).unwrap();
        assert_eq!(oracle.events.len(), 3);
        for w in oracle.events.windows(2) {
            assert!(w[0].end_frame < w[1].start_frame);
        }
        assert_eq!(stream.len() as u64, s.total_frames);
        assert_eq!(oracle.provenance.len(), stream.len());
        for (f, p) in stream.frames.iter().zip(&oracle.provenance) {
            assert_eq!(f.points.len(), p.len());
            assert!(f.points.iter().all(|q| q.is_valid()));
        }
    }

    #[test]
    fn no_background_means_clean_gaps() {
        let (users, templates) = setup();
        let s = Schedule::sequential(&[(0, 0), (1, 1)], &users, &templates, 20, (20, 25), 3).unwrap();
        let noise = NoiseConfig { background_rate: 0.0, ..Default::default() };
        let (stream, oracle) = synth_stream(&users, &templates, &s, &noise, 5).unwrap();
        for (f, prov) in stream.frames.iter().zip(&oracle.provenance) {
            let inside = oracle.events.iter().any(|e| (e.start_frame..=e.end_frame).contains(&f.index));
            if !inside {
                assert!(f.points.is_empty());
            }
            assert!(prov.iter().all(|p| *p == Provenance::Gesture));
        }
    }

    #[test]
    fn overlapping_events_rejected() {
        let (users, templates) = setup();
        let s = Schedule {
            events: vec![
                ScheduledEvent { user: 0, gesture: 0, start_frame: 10 },
                ScheduledEvent { user: 1, gesture: 1, start_frame: 15 },
            ],
            total_frames: 200,
        };
        assert!(matches!(synth_stream(&users, &templates, &s, &NoiseConfig::default(), 0), Err(Error::BadSchedule(_))));
    }

    #[test]
    fn deterministic_per_seed() {
        let (users, templates) = setup();
        let s = Schedule::sequential(&[(0, 1)], &users, &templates, 20, (20, 20), 3).unwrap();
        let a = synth_stream(&users, &templates, &s, &NoiseConfig::default(), 8).unwrap();
        let b = synth_stream(&users, &templates, &s, &NoiseConfig::default(), 8).unwrap();
        assert_eq!(a, b);
        let c = synth_stream(&users, &templates, &s, &NoiseConfig::default(), 9).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn spaced_profiles() {
        let users = UserProfile::spaced(4, 0.7, 1.3, 0);
        let scales: Vec<f64> = users.iter().map(|u| u.motion_scale).collect();
        assert!((scales[0] - 0.7).abs() < 1e-12 && (scales[3] - 1.3).abs() < 1e-12);
        for u in &users {
            u.validate().unwrap();
            assert!((0.7..=1.5).contains(&u.speed_factor));
            assert!((0.0..=0.04).contains(&u.style_jitter));
        }
    }
}
