//! Command-line front end. `run` parses arguments, executes one subcommand
//! and returns the process exit code: 0 on success, 1 for usage and
//! validation errors, 2 for failures while running.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cloud::{collection_difference, CloudCollection, Metric};
use crate::error::Error;
use crate::evaluator::{classification_metrics, det_csv, roc_csv, system_eer, user_score_sets, EerSummary, EvalReport};
use crate::gesidnet::{save_model, GesIDNetConfig};
use crate::io::{read_cloud, read_manifest, read_stream, write_cloud, write_manifest, write_stream, DatasetManifest, ManifestEntry};
use crate::pipeline::{
    check_cells, evaluate, infer, load_bundle, records_to_jsonl, save_bundle, train_gesture_model, train_parallel, train_serialized,
    train_parallel_user_model, train_user_models, Bundle, InferConfig, Mode, PipelineConfig, TrainLog,
};
use crate::preprocess::keep_main_cluster;
use crate::segmenter::segment_stream;
use crate::synthgen::{synth_dataset_with, DatasetSpec, GestureTemplate, NoiseConfig, UserProfile};
use crate::trainer::{gradient_check, TrainHistory};

#[derive(Debug, Parser)]
#[command(name = "gestureprint", version, about = "Gesture and user identification from radar point-cloud streams")]
pub struct Cli {
    /// Seed for every random choice; overrides the seeds of the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `key = value` settings file (see the README for the keys).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Gesture,
    User,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic streams, ground truth, denoised clouds and a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect gesture segments in a stream.
    Segment {
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Keep the main density cluster of a cloud.
    Denoise {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// HD, CD and JSD collection differences between users, per gesture.
    Metrics {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train gesture and/or user models on a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        task: Task,
        #[arg(long, default_value = "serialized")]
        mode: Mode,
    },
    /// Identify gesture and user in every segment of a stream.
    Infer {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against truth, or a bundle against a manifest.
    Eval {
        /// JSON Lines of `{"pred": k, "scores": [...]}`.
        #[arg(long, requires = "truth", conflicts_with_all = ["bundle", "manifest"])]
        predictions: Option<PathBuf>,
        /// JSON array of true labels.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, requires = "manifest")]
        bundle: Option<PathBuf>,
        #[arg(long, requires = "bundle")]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// One-vs-rest ROC points per class.
        #[arg(long)]
        roc_csv: Option<PathBuf>,
        /// FPR/FNR per threshold, for every class treated as the target user.
        #[arg(long)]
        det_csv: Option<PathBuf>,
        /// `user,eer,threshold` rows.
        #[arg(long)]
        eer_csv: Option<PathBuf>,
    },
    /// Finite-difference check of the analytic gradients on the tiny network.
    GradCheck,
}

/// Synthetic corpus settings of the `synth` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSettings {
    pub users: usize,
    pub gestures: usize,
    pub samples_per_cell: usize,
    pub scale_lo: f64,
    pub scale_hi: f64,
    pub lead_in: u64,
    pub gap: (u64, u64),
    pub noise: NoiseConfig,
}

impl Default for SynthSettings {
    fn default() -> Self {
        let spec = DatasetSpec::default();
        Self {
            users: 4,
            gestures: 3,
            samples_per_cell: 5,
            scale_lo: 0.7,
            scale_hi: 1.3,
            lead_in: spec.lead_in,
            gap: spec.gap,
            noise: spec.noise,
        }
    }
}

/// Everything a config file can set. Keys are dotted paths into this
/// structure, e.g. `gr_train.epochs` or `segmenter.floor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliConfig {
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
    pub synth: SynthSettings,
    /// Resamples averaged per prediction in `infer` and `eval`.
    pub votes: usize,
    /// Voxel edge of the JSD metric, meters.
    pub voxel: f64,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self { pipeline: PipelineConfig::default(), synth: SynthSettings::default(), votes: 1, voxel: Metric::<f64>::DEFAULT_VOXEL }
    }
}

impl CliConfig {
    /// Named starting points selected by the `preset` key.
    pub fn preset(name: &str) -> Result<Self, String> {
        let pipeline = match name {
            "standard" => PipelineConfig::default(),
            "compact" => PipelineConfig {
                gr_network: GesIDNetConfig::compact(2),
                ui_network: GesIDNetConfig::compact(2),
                ..PipelineConfig::default()
            },
            "benchmark" => PipelineConfig::benchmark(0),
            "tiny" => PipelineConfig {
                gr_network: GesIDNetConfig::tiny(2),
                ui_network: GesIDNetConfig::tiny(2),
                ..PipelineConfig::default()
            },
            _ => return Err(format!("unknown preset {name:?} (standard, compact, benchmark, tiny)")),
        };
        Ok(Self { pipeline, ..Self::default() })
    }

    /// Sets one dotted key. The value is read as JSON when it parses as
    /// JSON and as a bare string otherwise.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let mut tree = serde_json::to_value(&*self).expect("config serializes");
        let mut node = &mut tree;
        for part in key.split('.') {
            node = node.get_mut(part).ok_or_else(|| format!("unknown config key {key:?}"))?;
        }
        *node = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
        *self = serde_json::from_value(tree).map_err(|e| format!("bad value {value:?} for {key}: {e}"))?;
        Ok(())
    }

    /// Parses a settings file: `key = value` lines, `#` comments. A
    /// `preset` line is applied before every other key.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
            entries.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let mut cfg = match entries.iter().find(|e| e.1 == "preset") {
            Some((_, _, v)) => Self::preset(v)?,
            None => Self::default(),
        };
        for (line, k, v) in entries.iter().filter(|e| e.1 != "preset") {
            cfg.set(k, v).map_err(|e| format!("line {line}: {e}"))?;
        }
        Ok(cfg)
    }

    fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.pipeline.gr_train.seed = s;
            self.pipeline.ui_train.seed = s;
        }
        self
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::Run(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Run(
                Error::InvalidConfig(_)
                | Error::LabelOutOfRange { .. }
                | Error::EmptyCell { .. }
                | Error::EmptyDataset
                | Error::ClassTooSmall { .. }
                | Error::LengthMismatch(_)
                | Error::NonPositiveVoxel(_),
            ) => 1,
            Self::Run(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "{m}"),
            Self::Run(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Writes to `out` or, without a path, to stdout.
fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Run(e.into())),
        None => {
            use std::io::Write;
            match std::io::stdout().lock().write_all(text.as_bytes()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Run(e.into())),
                _ => Ok(()),
            }
        }
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("value serializes") + "\n"
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(Error::from)?;
    serde_json::from_str(&text).map_err(|e| CliError::Run(Error::Parse { line: e.line(), msg: e.to_string() }))
}

fn load_dataset(path: &Path) -> CliResult<(DatasetManifest, Vec<crate::Cloud>)> {
    let m = read_manifest(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let clouds = m.load_clouds(base)?;
    Ok((m, clouds))
}

fn synth(cfg: &CliConfig, seed: u64, out: &Path) -> CliResult<()> {
    let s = &cfg.synth;
    if s.users < 2 || s.gestures < 2 {
        return Err(CliError::Run(Error::InvalidConfig("synth needs at least two users and two gestures".into())));
    }
    let users = UserProfile::spaced(s.users, s.scale_lo, s.scale_hi, crate::rng::derive_seed(seed, &[0]));
    let templates = GestureTemplate::standard(s.gestures);
    let spec = DatasetSpec {
        samples_per_cell: s.samples_per_cell,
        noise: s.noise,
        segmenter: cfg.pipeline.segmenter,
        denoise: cfg.pipeline.denoise,
        lead_in: s.lead_in,
        gap: s.gap,
    };
    let data = synth_dataset_with(users, templates, &spec, seed)?;
    for sub in ["streams", "clouds"] {
        fs::create_dir_all(out.join(sub)).map_err(Error::from)?;
    }
    for (i, (stream, truth)) in data.streams.iter().enumerate() {
        write_stream(stream, out.join(format!("streams/stream-{i:05}.jsonl")))?;
        fs::write(out.join(format!("streams/stream-{i:05}.truth.json")), serde_json::to_string(truth).expect("truth serializes") + "\n")
            .map_err(Error::from)?;
    }
    let mut manifest = DatasetManifest {
        gestures: data.templates.iter().map(|t| format!("g{}-{:?}", t.gesture_id, t.trajectory).to_lowercase()).collect(),
        users: data.users.iter().map(|u| format!("user{}", u.user_id)).collect(),
        clouds: Vec::new(),
    };
    for (i, s) in data.samples.iter().enumerate() {
        let path = format!("clouds/cloud-{i:05}.json");
        write_cloud(&s.cloud, out.join(&path))?;
        manifest.clouds.push(ManifestEntry { path, gesture: s.gesture, user: s.user });
    }
    write_manifest(&manifest, out.join("manifest.json"))?;
    let profiles = serde_json::json!({ "users": data.users, "templates": data.templates });
    fs::write(out.join("profiles.json"), pretty(&profiles)).map_err(Error::from)?;
    emit(None, &format!("{}\n", serde_json::json!({ "streams": data.streams.len(), "clouds": data.samples.len() })))
}

fn metrics_csv(cfg: &CliConfig, manifest: &Path) -> CliResult<String> {
    let (m, clouds) = load_dataset(manifest)?;
    let mut out = String::from("gesture,user_a,user_b,metric,value\n");
    let metrics = [Metric::Hausdorff, Metric::Chamfer, Metric::Jsd { voxel: cfg.voxel }];
    for g in 0..m.gestures.len() {
        let per_user: Vec<CloudCollection<f64>> = (0..m.users.len())
            .map(|u| {
                let cs = m.clouds.iter().zip(&clouds).filter(|(e, _)| e.gesture == g && e.user == u).map(|(_, c)| c.clone()).collect();
                CloudCollection::labeled(cs, g, u)
            })
            .collect();
        for a in 0..per_user.len() {
            for b in a..per_user.len() {
                for metric in metrics {
                    let v = match collection_difference(&per_user[a], &per_user[b], metric) {
                        Ok(v) => v.to_string(),
                        Err(Error::EmptyCollection | Error::NoValidPairs) => "NA".into(),
                        Err(e) => return Err(e.into()),
                    };
                    out.push_str(&format!("{g},{a},{b},{},{v}\n", metric.name()));
                }
            }
        }
    }
    Ok(out)
}

fn history_csvs(out: &Path, log: &TrainLog) -> CliResult<()> {
    for (key, h) in log {
        fs::write(out.join(format!("history-{}.csv", key.replace(':', "-"))), h.to_csv()).map_err(Error::from)?;
    }
    Ok(())
}

fn summary(log: &TrainLog) -> String {
    let last = |h: &TrainHistory| h.epochs.last().map(|e| serde_json::json!({ "loss": e.loss, "accuracy": e.accuracy }));
    let models: serde_json::Map<String, Value> = log.iter().map(|(k, h)| (k.clone(), serde_json::json!(last(h)))).collect();
    pretty(&models)
}

fn train_cmd(cfg: &CliConfig, manifest: &Path, out: &Path, task: Task, mode: Mode) -> CliResult<()> {
    let (m, clouds) = load_dataset(manifest)?;
    let (g, u) = (m.gesture_labels(), m.user_labels());
    let p = &cfg.pipeline;
    fs::create_dir_all(out).map_err(Error::from)?;
    let log = match (task, mode) {
        (Task::Both, Mode::Serialized) => {
            let (b, log) = train_serialized(&clouds, &g, &u, p)?;
            save_bundle(out, &Bundle::Serialized(b))?;
            log
        }
        (Task::Both, Mode::Parallel) => {
            let (b, log) = train_parallel(&clouds, &g, &u, p)?;
            save_bundle(out, &Bundle::Parallel(b))?;
            log
        }
        (Task::Gesture, _) => {
            let (net, params, h) = train_gesture_model(&clouds, &g, p)?;
            save_model(out.join("gr.model"), &net, &params)?;
            TrainLog::from([("gr".to_string(), h)])
        }
        (Task::User, Mode::Serialized) => {
            let (net, models, log) = train_user_models(&clouds, &g, &u, p)?;
            for (gi, params) in &models {
                save_model(out.join(format!("ui-{gi}.model")), &net, params)?;
            }
            log
        }
        (Task::User, Mode::Parallel) => {
            check_cells(&g, &u)?;
            let (net, params, h) = train_parallel_user_model(&clouds, &u, p)?;
            save_model(out.join("ui.model"), &net, &params)?;
            TrainLog::from([("ui".to_string(), h)])
        }
    };
    history_csvs(out, &log)?;
    emit(None, &summary(&log))
}

#[derive(Debug, Deserialize)]
struct PredictionLine {
    pred: usize,
    scores: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct PredictionReport {
    metrics: EvalReport,
    eer: EerSummary,
}

fn eval_predictions(pred_path: &Path, truth_path: &Path) -> CliResult<(String, Vec<usize>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(pred_path).map_err(Error::from)?;
    let mut pred = Vec::new();
    let mut scores = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let p: PredictionLine = serde_json::from_str(line).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        pred.push(p.pred);
        scores.push(p.scores);
    }
    let truth: Vec<usize> = parse_json(truth_path)?;
    let metrics = classification_metrics(&truth, &pred, &scores)?;
    let eer = system_eer(&truth, &scores)?;
    Ok((pretty(&PredictionReport { metrics, eer }), truth, scores))
}

fn det_table(truth: &[usize], scores: &[Vec<f64>]) -> CliResult<String> {
    let mut out = String::from("user,threshold,fpr,fnr\n");
    for (u, set) in user_score_sets(truth, scores)?.iter().enumerate() {
        if set.genuine.is_empty() || set.impostor.is_empty() {
            continue;
        }
        for line in det_csv(set)?.lines().skip(1) {
            out.push_str(&format!("{u},{line}\n"));
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn eval_cmd(
    cfg: &CliConfig,
    seed: u64,
    predictions: Option<&Path>,
    truth: Option<&Path>,
    bundle: Option<&Path>,
    manifest: Option<&Path>,
    out: Option<&Path>,
    roc: Option<&Path>,
    det: Option<&Path>,
    eer_out: Option<&Path>,
) -> CliResult<()> {
    let (report, truth, scores) = match (predictions, truth, bundle, manifest) {
        (Some(p), Some(t), None, None) => eval_predictions(p, t)?,
        (None, None, Some(b), Some(m)) => {
            let bundle = load_bundle::<f64>(b)?;
            let (man, clouds) = load_dataset(m)?;
            let (g, u) = (man.gesture_labels(), man.user_labels());
            let r = evaluate(&bundle, &clouds, &g, &u, seed, cfg.votes)?;
            // user scores drive the ROC and DET tables in this form
            let scores: Vec<Vec<f64>> = clouds
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    crate::pipeline::identify(&bundle, c, crate::rng::derive_seed(seed, &[i as u64]), cfg.votes).map(|id| id.user_scores)
                })
                .collect::<crate::Result<_>>()?;
            (r.to_json() + "\n", u, scores)
        }
        _ => return Err(CliError::Usage("eval needs --predictions with --truth, or --bundle with --manifest".into())),
    };
    if let Some(p) = roc {
        fs::write(p, roc_csv(&truth, &scores)).map_err(Error::from)?;
    }
    if let Some(p) = det {
        fs::write(p, det_table(&truth, &scores)?).map_err(Error::from)?;
    }
    if let Some(p) = eer_out {
        let mut csv = String::from("user,eer,threshold\n");
        for (u, e) in system_eer(&truth, &scores)?.per_user.iter().enumerate() {
            match e {
                Some((v, t)) => csv.push_str(&format!("{u},{v},{t}\n")),
                None => csv.push_str(&format!("{u},NA,NA\n")),
            }
        }
        fs::write(p, csv).map_err(Error::from)?;
    }
    emit(out, &report)
}

fn grad_check(seed: u64) -> CliResult<()> {
    let report = gradient_check(&GesIDNetConfig::tiny(2), seed)?;
    let mut text = String::new();
    for b in &report.blocks {
        text.push_str(&format!("{:<24} {:>4} entries  max rel error {:.3e}\n", b.name, b.checked, b.max_rel_error));
    }
    text.push_str(&format!("max relative error: {:.6e} (tolerance {:.0e})\n", report.max_rel_error, report.tolerance));
    text.push_str(if report.passed { "PASS\n" } else { "FAIL\n" });
    emit(None, &text)?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Run(Error::TraceMismatch("analytic and numeric gradients disagree".into())))
    }
}

pub fn execute(cli: Cli) -> CliResult<()> {
    let cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("--config {}: {e}", p.display())))?;
            CliConfig::parse(&text).map_err(|e| CliError::Usage(format!("--config {}: {e}", p.display())))?
        }
        None => CliConfig::default(),
    }
    .with_seed(cli.seed);
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Synth { out } => synth(&cfg, seed, out),
        Command::Segment { stream, out } => {
            let s = read_stream(stream)?;
            emit(out.as_deref(), &pretty(&segment_stream(&s, &cfg.pipeline.segmenter)?))
        }
        Command::Denoise { cloud, out } => {
            let c = keep_main_cluster(&read_cloud(cloud)?, &cfg.pipeline.denoise)?;
            emit(out.as_deref(), &crate::io::render_cloud(&c))
        }
        Command::Metrics { manifest, out } => emit(out.as_deref(), &metrics_csv(&cfg, manifest)?),
        Command::Train { manifest, out, task, mode } => train_cmd(&cfg, manifest, out, *task, *mode),
        Command::Infer { bundle, stream, out } => {
            let b = load_bundle::<f64>(bundle)?;
            let s = read_stream(stream)?;
            let icfg = InferConfig { segmenter: cfg.pipeline.segmenter, denoise: cfg.pipeline.denoise, seed, votes: cfg.votes };
            emit(out.as_deref(), &records_to_jsonl(&infer(&b, &s, &icfg)?))
        }
        Command::Eval { predictions, truth, bundle, manifest, out, roc_csv, det_csv, eer_csv } => eval_cmd(
            &cfg,
            seed,
            predictions.as_deref(),
            truth.as_deref(),
            bundle.as_deref(),
            manifest.as_deref(),
            out.as_deref(),
            roc_csv.as_deref(),
            det_csv.as_deref(),
            eer_csv.as_deref(),
        ),
        Command::GradCheck => grad_check(seed),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Errors go to stderr.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
