use crate::error::CliError;
use crate::report::{
    BenchReport, DetectOutput, EvalConfigEcho, EvalReport, EvalTimings, HistoryReport, LabelFile,
    Manifest, VideoSource, VideoSummary, SCHEMA_VERSION,
};
use clap::{Args, ValueEnum};
use pat_core::data::{
    load_model, read_video, save_model, synth_videos, write_video, BackgroundMode, SynthConfig,
};
use pat_core::detector::{examples_per_epoch, train_with_progress};
use pat_core::metrics::{confusion, fdr, roc_auc, video_verdict};
use pat_core::perturb::{surrogate_dense_attack, surrogate_sparse_attack};
use pat_core::transition::transition_sequence_with;
use pat_core::{
    DetectorArchitecture, DetectorModel, Execution, FrameLabel, InputMode, RngSeed, SigmaMode,
    TrainConfig, VideoSequence,
};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const VIDEO_EXT: &str = "vseq";
pub const LABELS_SUFFIX: &str = ".labels.json";

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let dim = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((dim(h)?, dim(w)?))
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected LO:HI, got {s:?}"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((num(lo)?, num(hi)?))
}

fn parse_threshold(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("threshold must be at least 1".into()),
        Ok(k) => Ok(k),
        Err(e) => Err(e.to_string()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Video ids in `dir`: the manifest order when one exists, otherwise every
/// `.vseq` file sorted by name.
pub fn video_ids(dir: &Path) -> Result<Vec<String>, CliError> {
    let manifest = dir.join(MANIFEST_FILE);
    if manifest.is_file() {
        let m: Manifest = read_json(&manifest)?;
        if m.schema != SCHEMA_VERSION {
            return Err(CliError::Data(format!(
                "{}: unsupported schema {}",
                manifest.display(),
                m.schema
            )));
        }
        return Ok(m.videos);
    }
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == VIDEO_EXT) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

pub fn read_video_dir(dir: &Path) -> Result<Vec<VideoSequence>, CliError> {
    let ids = video_ids(dir)?;
    if ids.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no videos found",
            dir.display()
        )));
    }
    ids.iter()
        .map(|id| Ok(read_video(dir.join(format!("{id}.{VIDEO_EXT}")))?.with_id(id.clone())))
        .collect()
}

/// Writes each video as `<id>.vseq` plus a manifest listing them in order.
pub fn write_video_dir(dir: &Path, videos: &[VideoSequence]) -> Result<Manifest, CliError> {
    create_dir(dir)?;
    for v in videos {
        write_video(dir.join(format!("{}.{VIDEO_EXT}", v.id())), v)?;
    }
    let manifest = Manifest {
        schema: SCHEMA_VERSION,
        videos: videos.iter().map(|v| v.id().to_string()).collect(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn read_labels(dir: &Path, id: &str) -> Result<Vec<FrameLabel>, CliError> {
    let path = dir.join(format!("{id}{LABELS_SUFFIX}"));
    let file: LabelFile = read_json(&path)?;
    if file.schema != SCHEMA_VERSION {
        return Err(CliError::Data(format!(
            "{}: unsupported schema {}",
            path.display(),
            file.schema
        )));
    }
    if file.video_id != id {
        return Err(CliError::Data(format!(
            "{}: labels are for video {:?}",
            path.display(),
            file.video_id
        )));
    }
    Ok(file.labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Background {
    Uniform,
    Gradient,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub videos: usize,
    #[arg(long, default_value_t = 16)]
    pub frames: usize,
    /// Frame size as HxW.
    #[arg(long, default_value = "64x64", value_parser = parse_size)]
    pub size: (usize, usize),
    #[arg(long, default_value_t = 3)]
    pub channels: usize,
    #[arg(long, default_value_t = 1)]
    pub objects: usize,
    /// Object speed range in pixels per frame, LO:HI.
    #[arg(long, default_value = "1:3", value_parser = parse_range)]
    pub velocity: (f64, f64),
    #[arg(long, value_enum, default_value_t = Background::Uniform)]
    pub background: Background,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SynthArgs {
    pub fn config(&self) -> SynthConfig {
        SynthConfig {
            video_count: self.videos,
            frames_per_video: self.frames,
            height: self.size.0,
            width: self.size.1,
            channels: self.channels,
            object_count: self.objects,
            velocity_range: self.velocity,
            background_mode: match self.background {
                Background::Uniform => BackgroundMode::UniformRandom,
                Background::Gradient => BackgroundMode::Gradient,
            },
            seed: RngSeed(self.seed),
        }
    }
}

pub fn cmd_synth(args: &SynthArgs) -> Result<Manifest, CliError> {
    let videos = synth_videos(&args.config())?;
    write_video_dir(&args.out, &videos)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AttackMode {
    Sparse,
    Dense,
}

#[derive(Debug, Clone, Args)]
pub struct AttackArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub mode: AttackMode,
    /// Fraction of frames hit by the sparse attack.
    #[arg(long, default_value_t = 0.225)]
    pub rho: f64,
    /// Noise standard deviation of the sparse attack.
    #[arg(long, default_value_t = 0.03)]
    pub sigma: f64,
    /// Amplitude bound of the dense pattern.
    #[arg(long, default_value_t = 0.03)]
    pub eps: f64,
    /// Apply the same dense pattern to every frame instead of rolling it one
    /// row per frame.
    #[arg(long)]
    pub no_shift: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackSpec {
    Sparse { rho: f64, sigma: f64 },
    Dense { eps: f64, circular_shift: bool },
}

impl AttackArgs {
    pub fn spec(&self) -> AttackSpec {
        match self.mode {
            AttackMode::Sparse => AttackSpec::Sparse {
                rho: self.rho,
                sigma: self.sigma,
            },
            AttackMode::Dense => AttackSpec::Dense {
                eps: self.eps,
                circular_shift: !self.no_shift,
            },
        }
    }
}

/// Attacks every video; video `i` draws from its own stream of `seed`, so the
/// result does not depend on how many videos are processed together.
pub fn attack_videos(
    videos: &[VideoSequence],
    spec: AttackSpec,
    seed: RngSeed,
) -> Result<Vec<(VideoSequence, Vec<FrameLabel>)>, CliError> {
    videos
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut rng = seed.stream(i as u64);
            let out = match spec {
                AttackSpec::Sparse { rho, sigma } => {
                    surrogate_sparse_attack(v, rho, sigma, &mut rng)?
                }
                AttackSpec::Dense {
                    eps,
                    circular_shift,
                } => surrogate_dense_attack(v, eps, &mut rng, circular_shift)?,
            };
            Ok(out)
        })
        .collect()
}

pub fn cmd_attack(args: &AttackArgs) -> Result<Manifest, CliError> {
    let videos = read_video_dir(&args.input)?;
    let attacked = attack_videos(&videos, args.spec(), RngSeed(args.seed))?;
    let (videos, labels): (Vec<_>, Vec<_>) = attacked.into_iter().unzip();
    let manifest = write_video_dir(&args.out, &videos)?;
    for (v, labels) in videos.iter().zip(labels) {
        let file = LabelFile {
            schema: SCHEMA_VERSION,
            video_id: v.id().to_string(),
            labels,
        };
        write_json(&args.out.join(format!("{}{LABELS_SUFFIX}", v.id())), &file)?;
    }
    Ok(manifest)
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Directory of clean training videos.
    #[arg(long)]
    pub clean: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the training history; defaults to `<out>.history.json`.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    /// `varying:LO:HI` or `fixed:SIGMA`.
    #[arg(long, default_value_t = SigmaMode::default())]
    pub sigma_mode: SigmaMode,
    /// `transition` or `original`.
    #[arg(long, default_value_t = InputMode::Transition)]
    pub input_mode: InputMode,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run single-threaded. Output is identical either way.
    #[arg(long)]
    pub deterministic: bool,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    pub quiet: bool,
}

impl TrainArgs {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            momentum: self.momentum,
            sigma_mode: self.sigma_mode,
            input_mode: self.input_mode,
            seed: RngSeed(self.seed),
            deterministic: self.deterministic,
            ..TrainConfig::default()
        }
    }

    pub fn history_path(&self) -> PathBuf {
        self.history.clone().unwrap_or_else(|| {
            let mut name = self.out.as_os_str().to_owned();
            name.push(".history.json");
            PathBuf::from(name)
        })
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<HistoryReport, CliError> {
    let cfg = args.config();
    cfg.validate()?;
    let videos = read_video_dir(&args.clean)?;
    let start = Instant::now();
    let quiet = args.quiet;
    let (model, history) = train_with_progress(&videos, &cfg, |s| {
        if !quiet {
            eprintln!(
                "epoch {:>3}  loss {:.4}  accuracy {:.4}",
                s.epoch + 1,
                s.mean_loss,
                s.accuracy
            );
        }
    })?;
    let report = HistoryReport {
        schema: SCHEMA_VERSION,
        config: cfg,
        examples_per_epoch: examples_per_epoch(&videos),
        history,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    };
    save_model(&args.out, &model)?;
    write_json(&args.history_path(), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub video: PathBuf,
    /// Flagged frames needed to call the video adversarial.
    #[arg(long, default_value = "3", value_parser = parse_threshold)]
    pub threshold: usize,
    /// Print the full report as JSON.
    #[arg(long)]
    pub json: bool,
}

pub fn cmd_detect(args: &DetectArgs) -> Result<DetectOutput, CliError> {
    let model = load_model(&args.model)?;
    let video = read_video(&args.video)?;
    let report = model.detect_video(&video, args.threshold, Execution::Parallel)?;
    Ok(DetectOutput {
        schema: SCHEMA_VERSION,
        video_id: video.id().to_string(),
        report,
    })
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Directory of clean videos (all frames clean).
    #[arg(long)]
    pub clean: PathBuf,
    /// Directory of attacked videos.
    #[arg(long)]
    pub adv: PathBuf,
    /// Directory holding `<id>.labels.json`; defaults to the attacked directory.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value = "3", value_parser = parse_threshold)]
    pub threshold: usize,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// A video with per-frame ground truth.
pub struct LabeledVideo {
    pub video: VideoSequence,
    pub labels: Vec<FrameLabel>,
    pub source: VideoSource,
}

impl LabeledVideo {
    pub fn clean(video: VideoSequence) -> Self {
        let labels = vec![FrameLabel::Clean; video.len()];
        Self {
            video,
            labels,
            source: VideoSource::Clean,
        }
    }

    pub fn adversarial(video: VideoSequence, labels: Vec<FrameLabel>) -> Self {
        Self {
            video,
            labels,
            source: VideoSource::Adversarial,
        }
    }

    fn truth(&self) -> FrameLabel {
        if self.labels.iter().any(|l| l.is_adversarial()) {
            FrameLabel::Adversarial
        } else {
            FrameLabel::Clean
        }
    }
}

/// Runs detection on every video and summarises frame, video and ROC metrics.
/// Videos are scored independently, in parallel when available.
pub fn evaluate(
    model: &DetectorModel,
    videos: &[LabeledVideo],
    threshold: usize,
    config: EvalConfigEcho,
) -> Result<EvalReport, CliError> {
    if threshold == 0 {
        return Err(CliError::Config("threshold must be at least 1".into()));
    }
    for v in videos {
        if v.labels.len() != v.video.len() {
            return Err(CliError::Data(format!(
                "video {}: {} labels for {} frames",
                v.video.id(),
                v.labels.len(),
                v.video.len()
            )));
        }
    }
    let start = Instant::now();
    let reports = Execution::Parallel
        .map(videos, |v| {
            model.detect_video(&v.video, threshold, Execution::Sequential)
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let mut all_pred = Vec::new();
    let mut all_truth = Vec::new();
    let mut adv_pred = Vec::new();
    let mut adv_truth = Vec::new();
    let mut verdicts = Vec::new();
    let mut truths = Vec::new();
    let mut max_scores = Vec::new();
    let mut per_video = Vec::new();
    for (v, r) in videos.iter().zip(&reports) {
        all_pred.extend_from_slice(&r.per_frame_flags);
        all_truth.extend_from_slice(&v.labels);
        if v.source == VideoSource::Adversarial {
            adv_pred.extend_from_slice(&r.per_frame_flags);
            adv_truth.extend_from_slice(&v.labels);
        }
        let verdict = video_verdict(&r.per_frame_flags, threshold);
        verdicts.push(verdict);
        truths.push(v.truth());
        max_scores.push(r.max_score());
        per_video.push(VideoSummary {
            video_id: v.video.id().to_string(),
            source: v.source,
            truth: v.truth(),
            verdict,
            flagged_frames: r.flagged_count(),
            frames: v.video.len(),
            max_score: r.max_score(),
            elapsed_seconds: r.elapsed_seconds,
        });
    }
    let mean_detect_seconds =
        reports.iter().map(|r| r.elapsed_seconds).sum::<f64>() / reports.len().max(1) as f64;
    let report = EvalReport {
        schema: SCHEMA_VERSION,
        fdr: fdr(&all_pred, &all_truth)?,
        fdr_adversarial_videos: fdr(&adv_pred, &adv_truth)?,
        vdr: fdr(&verdicts, &truths)?,
        auc: roc_auc(&max_scores, &truths)?,
        confusion: confusion(&verdicts, &truths)?,
        per_video,
        config,
        timings: EvalTimings {
            total_seconds: start.elapsed().as_secs_f64(),
            mean_detect_seconds,
        },
    };
    report.validate().map_err(CliError::Internal)?;
    Ok(report)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport, CliError> {
    let model = load_model(&args.model)?;
    let labels_dir = args.labels.clone().unwrap_or_else(|| args.adv.clone());
    let mut videos: Vec<LabeledVideo> = read_video_dir(&args.clean)?
        .into_iter()
        .map(LabeledVideo::clean)
        .collect();
    for v in read_video_dir(&args.adv)? {
        let labels = read_labels(&labels_dir, v.id())?;
        videos.push(LabeledVideo::adversarial(v, labels));
    }
    let echo = EvalConfigEcho {
        model: args.model.display().to_string(),
        clean: args.clean.display().to_string(),
        adv: args.adv.display().to_string(),
        labels: labels_dir.display().to_string(),
        threshold: args.threshold,
    };
    let report = evaluate(&model, &videos, args.threshold, echo)?;
    if let Some(path) = &args.report {
        write_json(path, &report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Model to time; a randomly initialised default detector otherwise.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 40)]
    pub frames: usize,
    #[arg(long, default_value = "112x112", value_parser = parse_size)]
    pub size: (usize, usize),
    #[arg(long, default_value_t = 5)]
    pub videos: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn cmd_bench(args: &BenchArgs) -> Result<BenchReport, CliError> {
    let cfg = SynthConfig {
        video_count: args.videos,
        frames_per_video: args.frames,
        height: args.size.0,
        width: args.size.1,
        seed: RngSeed(args.seed),
        ..SynthConfig::default()
    };
    let videos = synth_videos(&cfg)?;
    let shape = videos[0].frame_shape();
    let model = match &args.model {
        Some(path) => load_model(path)?,
        None => {
            let arch = DetectorArchitecture::default_for(shape)?;
            DetectorModel::init(arch, InputMode::Transition, &mut RngSeed(args.seed).rng())
        }
    };
    let total_frames = (args.videos * args.frames) as f64;
    let throughput = |exec: Execution| {
        let start = Instant::now();
        for v in &videos {
            std::hint::black_box(transition_sequence_with(v, exec));
        }
        total_frames / start.elapsed().as_secs_f64().max(1e-12)
    };
    let sequential = throughput(Execution::Sequential);
    let parallel = throughput(Execution::Parallel);
    let mut detect_seconds = 0.0;
    for v in &videos {
        detect_seconds += model
            .detect_video(v, 3, Execution::Parallel)?
            .elapsed_seconds;
    }
    Ok(BenchReport {
        schema: SCHEMA_VERSION,
        frame_shape: shape,
        frames_per_video: args.frames,
        videos: args.videos,
        parallel_available: Execution::is_parallel_available(),
        transition_frames_per_second_sequential: sequential,
        transition_frames_per_second_parallel: parallel,
        mean_detect_seconds_per_video: detect_seconds / args.videos as f64,
    })
}
