//! Serialized and parallel identification modes: training the model bundles,
//! evaluating them on held-out clouds, and end-to-end inference on streams.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{FrameStream, GestureCloud};
use crate::error::{Error, Result};
use crate::evaluator::{classification_metrics, system_eer, uia_serialized, EerSummary, EvalReport};
use crate::gesidnet::{argmax, forward, load_model_expecting, save_model, softmax, GesIDNetConfig, ModelParams};
use crate::preprocess::{keep_main_cluster, DenoiseConfig};
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::segmenter::{aggregate_segment, segment_stream, SegmenterConfig};
use crate::trainer::{prepare_input, train, LrSchedule, TrainConfig, TrainHistory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Serialized,
    Parallel,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "serialized" => Ok(Self::Serialized),
            "parallel" => Ok(Self::Parallel),
            _ => Err(Error::InvalidConfig(format!("unknown mode {s:?}"))),
        }
    }
}

/// Everything needed to train a bundle. `num_classes` of the two network
/// configs is overwritten from the data.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub gr_train: TrainConfig,
    pub ui_train: TrainConfig,
    pub gr_network: GesIDNetConfig,
    pub ui_network: GesIDNetConfig,
    pub segmenter: SegmenterConfig,
    pub denoise: DenoiseConfig,
}

impl PipelineConfig {
    /// Settings of the synthetic end-to-end benchmark: compact networks with
    /// center coordinates in the global features, cosine-decayed Adam at
    /// `3e-3`, 15 epochs for the gesture model and 30 for user models.
    pub fn benchmark(seed: u64) -> Self {
        let net = GesIDNetConfig { global_xyz: true, ..GesIDNetConfig::compact(2) };
        let train = |epochs: usize| TrainConfig { lr: 3e-3, epochs, seed, schedule: LrSchedule::Cosine, ..TrainConfig::default() };
        Self { gr_train: train(15), ui_train: train(30), gr_network: net.clone(), ui_network: net, ..Self::default() }
    }
}

/// One gesture model plus one user model per gesture.
#[derive(Debug, Clone, PartialEq)]
pub struct SerializedBundle<T> {
    pub gr_config: GesIDNetConfig,
    pub gr_model: ModelParams<T>,
    pub ui_config: GesIDNetConfig,
    pub ui_models: BTreeMap<usize, ModelParams<T>>,
}

/// One gesture model plus one user model shared by all gestures.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelBundle<T> {
    pub gr_config: GesIDNetConfig,
    pub gr_model: ModelParams<T>,
    pub ui_config: GesIDNetConfig,
    pub ui_model: ModelParams<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Bundle<T> {
    Serialized(SerializedBundle<T>),
    Parallel(ParallelBundle<T>),
}

impl<T: Scalar> Bundle<T> {
    pub fn mode(&self) -> Mode {
        match self {
            Self::Serialized(_) => Mode::Serialized,
            Self::Parallel(_) => Mode::Parallel,
        }
    }

    pub fn gesture_model(&self) -> (&GesIDNetConfig, &ModelParams<T>) {
        match self {
            Self::Serialized(b) => (&b.gr_config, &b.gr_model),
            Self::Parallel(b) => (&b.gr_config, &b.gr_model),
        }
    }

    /// The user model consulted for a cloud recognized as `gesture`, with
    /// its key (`gesture:<g>` or `parallel`).
    pub fn user_model(&self, gesture: usize) -> Result<(String, &GesIDNetConfig, &ModelParams<T>)> {
        match self {
            Self::Serialized(b) => {
                let m = b.ui_models.get(&gesture).ok_or(Error::LabelOutOfRange {
                    label: gesture,
                    classes: b.gr_config.num_classes,
                })?;
                Ok((format!("gesture:{gesture}"), &b.ui_config, m))
            }
            Self::Parallel(b) => Ok(("parallel".into(), &b.ui_config, &b.ui_model)),
        }
    }
}

/// Training histories keyed by model (`gr`, `ui:<g>` or `ui`).
pub type TrainLog = BTreeMap<String, TrainHistory>;

/// Numbers of gestures and users, after checking that every combination
/// has samples.
pub fn check_cells(gestures: &[usize], users: &[usize]) -> Result<(usize, usize)> {
    if gestures.len() != users.len() {
        return Err(Error::LengthMismatch(format!("{} gesture labels, {} user labels", gestures.len(), users.len())));
    }
    let n_g = gestures.iter().max().map_or(0, |&g| g + 1);
    let n_u = users.iter().max().map_or(0, |&u| u + 1);
    if n_g < 2 || n_u < 2 {
        return Err(Error::EmptyDataset);
    }
    let mut seen = vec![false; n_g * n_u];
    for (&g, &u) in gestures.iter().zip(users) {
        seen[g * n_u + u] = true;
    }
    if let Some(i) = seen.iter().position(|&s| !s) {
        return Err(Error::EmptyCell { gesture: i / n_u, user: i % n_u });
    }
    Ok((n_g, n_u))
}

fn with_seed(cfg: &TrainConfig, path: &[u64]) -> TrainConfig {
    TrainConfig { seed: derive_seed(cfg.seed, path), ..cfg.clone() }
}

/// The gesture model shared by both modes.
pub fn train_gesture_model<T: Scalar>(
    clouds: &[GestureCloud<T>],
    gestures: &[usize],
    cfg: &PipelineConfig,
) -> Result<(GesIDNetConfig, ModelParams<T>, TrainHistory)> {
    let n_g = gestures.iter().max().map_or(0, |&g| g + 1);
    let net = cfg.gr_network.clone().with_classes(n_g);
    let (params, history) = train(clouds, gestures, &with_seed(&cfg.gr_train, &[0]), &net)?;
    Ok((net, params, history))
}

/// One user model per gesture, each trained on that gesture's samples only.
pub fn train_user_models<T: Scalar>(
    clouds: &[GestureCloud<T>],
    gestures: &[usize],
    users: &[usize],
    cfg: &PipelineConfig,
) -> Result<(GesIDNetConfig, BTreeMap<usize, ModelParams<T>>, TrainLog)> {
    let (n_g, n_u) = check_cells(gestures, users)?;
    let net = cfg.ui_network.clone().with_classes(n_u);
    let trained: Vec<(ModelParams<T>, TrainHistory)> = (0..n_g)
        .into_par_iter()
        .map(|g| {
            let idx: Vec<usize> = (0..clouds.len()).filter(|&i| gestures[i] == g).collect();
            let sub: Vec<GestureCloud<T>> = idx.iter().map(|&i| clouds[i].clone()).collect();
            let labels: Vec<usize> = idx.iter().map(|&i| users[i]).collect();
            train(&sub, &labels, &with_seed(&cfg.ui_train, &[1, g as u64]), &net)
        })
        .collect::<Result<_>>()?;
    let mut models = BTreeMap::new();
    let mut log = TrainLog::new();
    for (g, (params, history)) in trained.into_iter().enumerate() {
        models.insert(g, params);
        log.insert(format!("ui:{g}"), history);
    }
    Ok((net, models, log))
}

pub fn train_serialized<T: Scalar>(
    clouds: &[GestureCloud<T>],
    gestures: &[usize],
    users: &[usize],
    cfg: &PipelineConfig,
) -> Result<(SerializedBundle<T>, TrainLog)> {
    check_cells(gestures, users)?;
    if clouds.len() != gestures.len() {
        return Err(Error::LengthMismatch(format!("{} clouds, {} labels", clouds.len(), gestures.len())));
    }
    let (gr_config, gr_model, gr_history) = train_gesture_model(clouds, gestures, cfg)?;
    let (ui_config, ui_models, mut log) = train_user_models(clouds, gestures, users, cfg)?;
    log.insert("gr".into(), gr_history);
    Ok((SerializedBundle { gr_config, gr_model, ui_config, ui_models }, log))
}

pub fn train_parallel<T: Scalar>(
    clouds: &[GestureCloud<T>],
    gestures: &[usize],
    users: &[usize],
    cfg: &PipelineConfig,
) -> Result<(ParallelBundle<T>, TrainLog)> {
    check_cells(gestures, users)?;
    if clouds.len() != gestures.len() {
        return Err(Error::LengthMismatch(format!("{} clouds, {} labels", clouds.len(), gestures.len())));
    }
    let (gr_config, gr_model, gr_history) = train_gesture_model(clouds, gestures, cfg)?;
    let (ui_config, ui_model, ui_history) = train_parallel_user_model(clouds, users, cfg)?;
    let log = TrainLog::from([("gr".into(), gr_history), ("ui".into(), ui_history)]);
    Ok((ParallelBundle { gr_config, gr_model, ui_config, ui_model }, log))
}

/// The single user model of parallel mode, trained on every sample.
pub fn train_parallel_user_model<T: Scalar>(
    clouds: &[GestureCloud<T>],
    users: &[usize],
    cfg: &PipelineConfig,
) -> Result<(GesIDNetConfig, ModelParams<T>, TrainHistory)> {
    let n_u = users.iter().max().map_or(0, |m| m + 1);
    let ui_config = cfg.ui_network.clone().with_classes(n_u);
    let (ui_model, ui_history) = train(clouds, users, &with_seed(&cfg.ui_train, &[2]), &ui_config)?;
    Ok((ui_config, ui_model, ui_history))
}

/// Prediction and softmax scores of one denoised cloud. With `votes > 1`
/// the scores are averaged over that many independent resamples (draw `v`
/// seeded by `derive_seed(seed, [v])`); a single vote uses `seed` itself.
pub fn score_cloud<T: Scalar>(
    params: &ModelParams<T>,
    cloud: &GestureCloud<T>,
    net: &GesIDNetConfig,
    seed: u64,
    votes: usize,
) -> Result<(usize, Vec<f64>)> {
    if votes == 0 {
        return Err(Error::InvalidConfig("votes must be positive".into()));
    }
    let draw = |s: u64| -> Result<Vec<f64>> {
        let input = prepare_input(cloud, net.point_count, s)?;
        let logits = forward(params, &input, net)?.primary;
        Ok(softmax(&logits).into_iter().map(Scalar::as_f64).collect())
    };
    if votes == 1 {
        let scores = draw(seed)?;
        return Ok((argmax(&scores), scores));
    }
    let mut sum = vec![0.0; net.num_classes];
    for v in 0..votes {
        for (a, b) in sum.iter_mut().zip(draw(derive_seed(seed, &[v as u64]))?) {
            *a += b;
        }
    }
    let scores: Vec<f64> = sum.into_iter().map(|s| s / votes as f64).collect();
    Ok((argmax(&scores), scores))
}

/// Gesture then user prediction for one denoised cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    pub gesture: usize,
    pub user: usize,
    pub gesture_scores: Vec<f64>,
    pub user_scores: Vec<f64>,
    /// Key of the user model consulted.
    pub ui_model: String,
}

pub fn identify<T: Scalar>(bundle: &Bundle<T>, cloud: &GestureCloud<T>, seed: u64, votes: usize) -> Result<Identification> {
    let (gr_cfg, gr) = bundle.gesture_model();
    let (gesture, gesture_scores) = score_cloud(gr, cloud, gr_cfg, seed, votes)?;
    let (key, ui_cfg, ui) = bundle.user_model(gesture)?;
    let (user, user_scores) = score_cloud(ui, cloud, ui_cfg, seed, votes)?;
    Ok(Identification { gesture, user, gesture_scores, user_scores, ui_model: key })
}

/// Held-out evaluation of a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: Mode,
    /// Gesture recognition accuracy.
    pub gra: f64,
    pub gesture: EvalReport,
    /// Mean over gestures of the user accuracy on that gesture's samples.
    pub uia: f64,
    /// User metrics on the samples of each true gesture.
    pub user_per_gesture: Vec<EvalReport>,
    /// User metrics over all samples.
    pub user: EvalReport,
    pub eer: EerSummary,
}

impl ModeReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Runs both stages on every cloud (sample `i` resampled with
/// `derive_seed(seed, [i])`). A wrongly recognized gesture in serialized mode
/// routes to the wrong user model and the error is counted as is.
pub fn evaluate<T: Scalar>(
    bundle: &Bundle<T>,
    clouds: &[GestureCloud<T>],
    gestures: &[usize],
    users: &[usize],
    seed: u64,
    votes: usize,
) -> Result<ModeReport> {
    let (n_g, _) = check_cells(gestures, users)?;
    if clouds.len() != gestures.len() {
        return Err(Error::LengthMismatch(format!("{} clouds, {} labels", clouds.len(), gestures.len())));
    }
    let ids: Vec<Identification> = clouds
        .par_iter()
        .enumerate()
        .map(|(i, c)| identify(bundle, c, derive_seed(seed, &[i as u64]), votes))
        .collect::<Result<_>>()?;
    let g_pred: Vec<usize> = ids.iter().map(|r| r.gesture).collect();
    let g_scores: Vec<Vec<f64>> = ids.iter().map(|r| r.gesture_scores.clone()).collect();
    let u_pred: Vec<usize> = ids.iter().map(|r| r.user).collect();
    let u_scores: Vec<Vec<f64>> = ids.iter().map(|r| r.user_scores.clone()).collect();
    let gesture = classification_metrics(gestures, &g_pred, &g_scores)?;
    let user_per_gesture: Vec<EvalReport> = (0..n_g)
        .map(|g| {
            let idx: Vec<usize> = (0..clouds.len()).filter(|&i| gestures[i] == g).collect();
            let pick = |v: &[usize]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
            let scores: Vec<Vec<f64>> = idx.iter().map(|&i| u_scores[i].clone()).collect();
            classification_metrics(&pick(users), &pick(&u_pred), &scores)
        })
        .collect::<Result<_>>()?;
    Ok(ModeReport {
        mode: bundle.mode(),
        gra: gesture.accuracy,
        gesture,
        uia: uia_serialized(&user_per_gesture)?,
        user: classification_metrics(users, &u_pred, &u_scores)?,
        user_per_gesture,
        eer: system_eer(users, &u_scores)?,
    })
}

/// Settings for end-to-end inference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferConfig {
    pub segmenter: SegmenterConfig,
    pub denoise: DenoiseConfig,
    /// Resampling seed; a segment uses `derive_seed(seed, [start frame])`.
    pub seed: u64,
    /// Resamples whose scores are averaged per segment.
    pub votes: usize,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self { segmenter: SegmenterConfig::default(), denoise: DenoiseConfig::default(), seed: 0, votes: 1 }
    }
}

/// One line of the inference output. Failed segments carry `error` and no
/// labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferRecord {
    pub start_frame: u64,
    pub end_frame: u64,
    pub gesture: Option<usize>,
    pub user: Option<usize>,
    pub gesture_scores: Vec<f64>,
    pub user_scores: Vec<f64>,
    pub ui_model: Option<String>,
    pub error: Option<String>,
}

/// Segments the stream and identifies gesture and user in every segment.
pub fn infer<T: Scalar>(bundle: &Bundle<T>, stream: &FrameStream<T>, cfg: &InferConfig) -> Result<Vec<InferRecord>> {
    cfg.denoise.validate()?;
    let segments = segment_stream(stream, &cfg.segmenter)?;
    segments
        .par_iter()
        .map(|seg| {
            let cloud = aggregate_segment(stream, seg)?;
            let mut rec = InferRecord {
                start_frame: seg.start_frame,
                end_frame: seg.end_frame,
                gesture: None,
                user: None,
                gesture_scores: Vec::new(),
                user_scores: Vec::new(),
                ui_model: None,
                error: None,
            };
            let outcome = keep_main_cluster(&cloud, &cfg.denoise)
                .and_then(|c| identify(bundle, &c, derive_seed(cfg.seed, &[seg.start_frame]), cfg.votes));
            match outcome {
                Ok(id) => {
                    rec.gesture = Some(id.gesture);
                    rec.user = Some(id.user);
                    rec.gesture_scores = id.gesture_scores;
                    rec.user_scores = id.user_scores;
                    rec.ui_model = Some(id.ui_model);
                }
                Err(e @ Error::NoCluster { .. }) => rec.error = Some(e.to_string()),
                Err(e) => return Err(e),
            }
            Ok(rec)
        })
        .collect()
}

/// One JSON object per line.
pub fn records_to_jsonl(records: &[InferRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
}

const BUNDLE_FORMAT: &str = "gestureprint-bundle 1";
const BUNDLE_MANIFEST: &str = "bundle.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BundleManifest {
    format: String,
    mode: Mode,
    gr_config: GesIDNetConfig,
    ui_config: GesIDNetConfig,
    gr_model: String,
    /// Gesture key (`"parallel"` in parallel mode) to file name.
    ui_models: BTreeMap<String, String>,
}

/// Writes `bundle.json` and one model file per network into `dir`.
pub fn save_bundle<T: Scalar>(dir: impl AsRef<Path>, bundle: &Bundle<T>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let (gr_config, gr) = bundle.gesture_model();
    save_model(dir.join("gr.model"), gr_config, gr)?;
    let (ui_config, ui_models) = match bundle {
        Bundle::Serialized(b) => {
            let mut files = BTreeMap::new();
            for (g, m) in &b.ui_models {
                let name = format!("ui-{g}.model");
                save_model(dir.join(&name), &b.ui_config, m)?;
                files.insert(g.to_string(), name);
            }
            (b.ui_config.clone(), files)
        }
        Bundle::Parallel(b) => {
            save_model(dir.join("ui.model"), &b.ui_config, &b.ui_model)?;
            (b.ui_config.clone(), BTreeMap::from([("parallel".to_string(), "ui.model".to_string())]))
        }
    };
    let manifest = BundleManifest {
        format: BUNDLE_FORMAT.into(),
        mode: bundle.mode(),
        gr_config: gr_config.clone(),
        ui_config,
        gr_model: "gr.model".into(),
        ui_models,
    };
    fs::write(dir.join(BUNDLE_MANIFEST), serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n")?;
    Ok(())
}

pub fn load_bundle<T: Scalar>(dir: impl AsRef<Path>) -> Result<Bundle<T>> {
    let dir = dir.as_ref();
    let text = fs::read_to_string(dir.join(BUNDLE_MANIFEST))?;
    let m: BundleManifest =
        serde_json::from_str(&text).map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })?;
    if m.format != BUNDLE_FORMAT {
        return Err(Error::VersionMismatch { found: m.format, expected: BUNDLE_FORMAT.into() });
    }
    let gr_model = load_model_expecting(dir.join(&m.gr_model), &m.gr_config)?;
    match m.mode {
        Mode::Serialized => {
            let mut ui_models = BTreeMap::new();
            for (key, file) in &m.ui_models {
                let g: usize = key.parse().map_err(|_| Error::Parse { line: 0, msg: format!("bad gesture key {key:?}") })?;
                ui_models.insert(g, load_model_expecting(dir.join(file), &m.ui_config)?);
            }
            Ok(Bundle::Serialized(SerializedBundle { gr_config: m.gr_config, gr_model, ui_config: m.ui_config, ui_models }))
        }
        Mode::Parallel => {
            let file = m
                .ui_models
                .get("parallel")
                .ok_or_else(|| Error::Parse { line: 0, msg: "parallel bundle without user model".into() })?;
            let ui_model = load_model_expecting(dir.join(file), &m.ui_config)?;
            Ok(Bundle::Parallel(ParallelBundle { gr_config: m.gr_config, gr_model, ui_config: m.ui_config, ui_model }))
        }
    }
}
