//! JSON documents read and written by the commands. Every top-level document
//! carries `"schema": 1`.

use pat_core::metrics::ConfusionMatrix;
use pat_core::{DetectionReport, FrameLabel, TrainConfig, TrainHistory};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Video ids of a directory, in processing order. Each id has a `<id>.vseq`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub videos: Vec<String>,
}

/// Per-frame ground truth for one attacked video (`<id>.labels.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelFile {
    pub schema: u32,
    pub video_id: String,
    pub labels: Vec<FrameLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryReport {
    pub schema: u32,
    pub config: TrainConfig,
    pub examples_per_epoch: usize,
    pub history: TrainHistory,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectOutput {
    pub schema: u32,
    pub video_id: String,
    #[serde(flatten)]
    pub report: DetectionReport,
}

/// Where a video in an evaluation came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VideoSource {
    Clean,
    Adversarial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSummary {
    pub video_id: String,
    pub source: VideoSource,
    pub truth: FrameLabel,
    pub verdict: FrameLabel,
    pub flagged_frames: usize,
    pub frames: usize,
    pub max_score: f64,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfigEcho {
    pub model: String,
    pub clean: String,
    pub adv: String,
    pub labels: String,
    pub threshold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTimings {
    pub total_seconds: f64,
    pub mean_detect_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: u32,
    /// Frame agreement over every frame of every evaluated video.
    pub fdr: f64,
    /// Frame agreement restricted to the adversarial (attacked) videos.
    pub fdr_adversarial_videos: f64,
    pub vdr: f64,
    /// ROC AUC over videos, scoring each video by its largest frame score.
    pub auc: f64,
    pub confusion: ConfusionMatrix,
    pub per_video: Vec<VideoSummary>,
    pub config: EvalConfigEcho,
    pub timings: EvalTimings,
}

impl EvalReport {
    /// Range checks on every metric and timing.
    pub fn validate(&self) -> Result<(), String> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(format!("{name} = {v} is outside [0, 1]"))
            }
        };
        if self.schema != SCHEMA_VERSION {
            return Err(format!("unsupported schema {}", self.schema));
        }
        unit("fdr", self.fdr)?;
        unit("fdr_adversarial_videos", self.fdr_adversarial_videos)?;
        unit("vdr", self.vdr)?;
        unit("auc", self.auc)?;
        if self.confusion.total() != self.per_video.len() {
            return Err("confusion counts do not sum to the number of videos".into());
        }
        if self.timings.total_seconds < 0.0 || self.timings.mean_detect_seconds < 0.0 {
            return Err("negative timing".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema: u32,
    pub frame_shape: (usize, usize, usize),
    pub frames_per_video: usize,
    pub videos: usize,
    pub parallel_available: bool,
    pub transition_frames_per_second_sequential: f64,
    pub transition_frames_per_second_parallel: f64,
    pub mean_detect_seconds_per_video: f64,
}
