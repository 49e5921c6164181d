//! Frame and video value types shared by the whole pipeline.
//!
//! A [`Frame`] is a dense `height x width x channels` array stored row-major
//! with the channel index varying fastest. Source frames hold unit-interval
//! intensities; transition frames and noise masks reuse the same type with
//! signed values.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("frame dimensions must be positive, got {height}x{width}x{channels}")]
    ZeroDimension {
        height: usize,
        width: usize,
        channels: usize,
    },
    #[error("data length {actual} does not match {height}x{width}x{channels} = {expected}")]
    LengthMismatch {
        height: usize,
        width: usize,
        channels: usize,
        expected: usize,
        actual: usize,
    },
    #[error("value {value} at index {index} is outside [{lo}, {hi}]")]
    OutOfRange {
        index: usize,
        value: f32,
        lo: f32,
        hi: f32,
    },
    #[error("value at index {index} is not finite")]
    NonFinite { index: usize },
    #[error("shape mismatch: {expected:?} vs {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize, usize),
        actual: (usize, usize, usize),
    },
    #[error("a video needs at least 2 frames, got {0}")]
    TooShort(usize),
    #[error("duplicate labeled item for video {video_id:?} frame {frame_index}")]
    DuplicateItem {
        video_id: String,
        frame_index: usize,
    },
    #[error("threshold must be at least 1")]
    ZeroThreshold,
    #[error("score {0} is outside [0, 1]")]
    ScoreOutOfRange(f64),
}

/// Whether [`Frame::new`] enforces the source-pixel range `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RangeCheck {
    /// Source video pixels: every value must lie in `[0, 1]`.
    UnitInterval,
    /// Transition frames and noise masks: any finite value.
    Finite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Frame {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
        check: RangeCheck,
    ) -> Result<Self, FrameError> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(FrameError::ZeroDimension {
                height,
                width,
                channels,
            });
        }
        let expected = height
            .checked_mul(width)
            .and_then(|v| v.checked_mul(channels))
            .unwrap_or(usize::MAX);
        if data.len() != expected {
            return Err(FrameError::LengthMismatch {
                height,
                width,
                channels,
                expected,
                actual: data.len(),
            });
        }
        for (index, &value) in data.iter().enumerate() {
            if !value.is_finite() {
                return Err(FrameError::NonFinite { index });
            }
            if check == RangeCheck::UnitInterval && !(0.0..=1.0).contains(&value) {
                return Err(FrameError::OutOfRange {
                    index,
                    value,
                    lo: 0.0,
                    hi: 1.0,
                });
            }
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// All-zero frame of the given shape.
    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self, FrameError> {
        let len = height
            .checked_mul(width)
            .and_then(|v| v.checked_mul(channels))
            .unwrap_or(0);
        Self::new(height, width, channels, vec![0.0; len], RangeCheck::Finite)
    }

    /// Build a frame from 8-bit intensities, scaling by 1/255.
    pub fn from_u8(
        height: usize,
        width: usize,
        channels: usize,
        bytes: &[u8],
    ) -> Result<Self, FrameError> {
        let data = bytes.iter().map(|&b| f32::from(b) / 255.0).collect();
        Self::new(height, width, channels, data, RangeCheck::UnitInterval)
    }

    /// Internal constructor for arithmetic results whose shape is already known.
    pub(crate) fn from_parts(shape: (usize, usize, usize), data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.0 * shape.1 * shape.2, data.len());
        Self {
            height: shape.0,
            width: shape.1,
            channels: shape.2,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Flat index of `(row, col, channel)`.
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[self.index(row, col, channel)]
    }

    pub fn is_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }

    pub(crate) fn check_same_shape(&self, other: &Frame) -> Result<(), FrameError> {
        if self.shape() != other.shape() {
            return Err(FrameError::ShapeMismatch {
                expected: self.shape(),
                actual: other.shape(),
            });
        }
        Ok(())
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &Frame) -> Result<Frame, FrameError> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Frame::from_parts(self.shape(), data))
    }

    /// Elementwise `self + other`.
    pub fn add(&self, other: &Frame) -> Result<Frame, FrameError> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Frame::from_parts(self.shape(), data))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    id: String,
    frames: Vec<Frame>,
}

impl VideoSequence {
    pub fn new(frames: Vec<Frame>, id: impl Into<String>) -> Result<Self, FrameError> {
        if frames.len() < 2 {
            return Err(FrameError::TooShort(frames.len()));
        }
        let shape = frames[0].shape();
        for frame in &frames[1..] {
            if frame.shape() != shape {
                return Err(FrameError::ShapeMismatch {
                    expected: shape,
                    actual: frame.shape(),
                });
            }
        }
        Ok(Self {
            id: id.into(),
            frames,
        })
    }

    /// Like [`VideoSequence::new`] but additionally requires unit-range pixels.
    pub fn new_source(frames: Vec<Frame>, id: impl Into<String>) -> Result<Self, FrameError> {
        for frame in &frames {
            if let Some((index, &value)) = frame
                .data()
                .iter()
                .enumerate()
                .find(|(_, v)| !(0.0..=1.0).contains(*v))
            {
                return Err(FrameError::OutOfRange {
                    index,
                    value,
                    lo: 0.0,
                    hi: 1.0,
                });
            }
        }
        Self::new(frames, id)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    /// Always false: a validated video holds at least two frames.
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_shape(&self) -> (usize, usize, usize) {
        self.frames[0].shape()
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }
}

/// Ground truth or prediction for one frame (or one video).
/// `Adversarial` is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum FrameLabel {
    Clean = 0,
    Adversarial = 1,
}

impl FrameLabel {
    pub fn is_adversarial(self) -> bool {
        self == FrameLabel::Adversarial
    }

    pub fn as_index(self) -> usize {
        self as usize
    }

    /// Apply the fixed 0.5 decision rule to an adversarial score.
    pub fn from_score(score: f64) -> Self {
        if score >= DECISION_THRESHOLD {
            FrameLabel::Adversarial
        } else {
            FrameLabel::Clean
        }
    }
}

impl From<FrameLabel> for u8 {
    fn from(label: FrameLabel) -> u8 {
        label as u8
    }
}

impl TryFrom<u8> for FrameLabel {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            0 => Ok(FrameLabel::Clean),
            1 => Ok(FrameLabel::Adversarial),
            other => Err(format!("frame label must be 0 or 1, got {other}")),
        }
    }
}

/// Score at or above which a frame is flagged adversarial.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// Flagged-frame count at or above which a video is declared adversarial.
pub const DEFAULT_VIDEO_THRESHOLD: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledItem {
    pub frame: Frame,
    pub label: FrameLabel,
    pub video_id: String,
    pub frame_index: usize,
}

/// Training/evaluation container of labeled frames with a common shape.
#[derive(Debug, Clone, Default)]
pub struct LabeledFrameSet {
    items: Vec<LabeledItem>,
    keys: HashSet<(String, usize)>,
}

impl LabeledFrameSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(
        &mut self,
        frame: Frame,
        label: FrameLabel,
        video_id: impl Into<String>,
        frame_index: usize,
    ) -> Result<(), FrameError> {
        if let Some(first) = self.items.first() {
            first.frame.check_same_shape(&frame)?;
        }
        let video_id = video_id.into();
        if !self.keys.insert((video_id.clone(), frame_index)) {
            return Err(FrameError::DuplicateItem {
                video_id,
                frame_index,
            });
        }
        self.items.push(LabeledItem {
            frame,
            label,
            video_id,
            frame_index,
        });
        Ok(())
    }

    pub fn items(&self) -> &[LabeledItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Per-frame scores, flags and the video verdict for one detection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub per_frame_scores: Vec<f64>,
    pub per_frame_flags: Vec<FrameLabel>,
    pub video_verdict: FrameLabel,
    pub threshold_used: usize,
    pub elapsed_seconds: f64,
}

impl DetectionReport {
    /// Derive flags and verdict from scores; flags and verdict are never
    /// supplied independently so the report is consistent by construction.
    pub fn from_scores(
        scores: Vec<f64>,
        threshold: usize,
        elapsed_seconds: f64,
    ) -> Result<Self, FrameError> {
        if threshold == 0 {
            return Err(FrameError::ZeroThreshold);
        }
        if let Some(&bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(FrameError::ScoreOutOfRange(bad));
        }
        let flags: Vec<FrameLabel> = scores.iter().map(|&s| FrameLabel::from_score(s)).collect();
        let flagged = flags.iter().filter(|f| f.is_adversarial()).count();
        let video_verdict = if flagged >= threshold {
            FrameLabel::Adversarial
        } else {
            FrameLabel::Clean
        };
        Ok(Self {
            per_frame_scores: scores,
            per_frame_flags: flags,
            video_verdict,
            threshold_used: threshold,
            elapsed_seconds: elapsed_seconds.max(0.0),
        })
    }

    pub fn flagged_count(&self) -> usize {
        self.per_frame_flags
            .iter()
            .filter(|f| f.is_adversarial())
            .count()
    }

    /// Video-level score used for ROC analysis: the largest frame score.
    pub fn max_score(&self) -> f64 {
        self.per_frame_scores.iter().copied().fold(0.0, f64::max)
    }
}
