//! The binary detection network and its training loop.

mod arch;
mod network;
mod optim;
mod real;
mod train;

pub use arch::{
    DetectorArchitecture, InputMode, LayerSpec, DEFAULT_CONV_CHANNELS, DEFAULT_DENSE_WIDTHS,
    MAX_PARAMS, NUM_CLASSES,
};
pub use network::{LossAndGrads, Network, Params, GRAD_CHUNK};
pub use optim::sgd_step;
pub use real::Real;
pub use train::{
    examples_per_epoch, train, train_with_progress, EpochStats, TrainConfig, TrainHistory,
};

use std::time::Instant;
use thiserror::Error;

use crate::exec::Execution;
use crate::frame::{DetectionReport, Frame, FrameError, VideoSequence};
use crate::transition::transition_sequence_with;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("input length {actual} does not match expected {expected}")]
    InputShape { expected: usize, actual: usize },
    #[error("frame shape {actual:?} does not match model input {expected:?}")]
    FrameShape {
        expected: (usize, usize, usize),
        actual: (usize, usize, usize),
    },
    #[error("parameter shapes do not match the architecture")]
    ParamShape,
    #[error("weights contain NaN or infinity")]
    NonFiniteWeights,
    #[error("empty batch")]
    EmptyBatch,
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// A detector ready for inference: network weights plus the kind of input it
/// was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    network: Network<f32>,
    input_mode: InputMode,
    trained: bool,
}

impl DetectorModel {
    pub fn new(
        network: Network<f32>,
        input_mode: InputMode,
        trained: bool,
    ) -> Result<Self, DetectorError> {
        if !network.params().is_finite() {
            return Err(DetectorError::NonFiniteWeights);
        }
        Ok(Self {
            network,
            input_mode,
            trained,
        })
    }

    /// Freshly initialised (untrained) model.
    pub fn init<R: rand::Rng + ?Sized>(
        arch: DetectorArchitecture,
        input_mode: InputMode,
        rng: &mut R,
    ) -> Self {
        Self {
            network: Network::init(arch, rng),
            input_mode,
            trained: false,
        }
    }

    pub fn network(&self) -> &Network<f32> {
        &self.network
    }

    pub fn architecture(&self) -> &DetectorArchitecture {
        self.network.architecture()
    }

    pub fn input_mode(&self) -> InputMode {
        self.input_mode
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    fn check_frame(&self, frame: &Frame) -> Result<(), DetectorError> {
        let expected = self.architecture().input_shape();
        if frame.shape() != expected {
            return Err(DetectorError::FrameShape {
                expected,
                actual: frame.shape(),
            });
        }
        Ok(())
    }

    /// Class probabilities `[p_clean, p_adversarial]` for each input frame.
    pub fn forward(
        &self,
        frames: &[Frame],
        exec: Execution,
    ) -> Result<Vec<[f64; 2]>, DetectorError> {
        let mut input = Vec::with_capacity(frames.len() * self.architecture().input_len());
        for f in frames {
            self.check_frame(f)?;
            input.extend_from_slice(f.data());
        }
        self.network.forward(&input, frames.len(), exec)
    }

    /// Adversarial probability of one detector input (a transition frame, or
    /// a raw frame for an original-input model).
    pub fn predict_frame(&self, input: &Frame) -> Result<f64, DetectorError> {
        Ok(self.forward(std::slice::from_ref(input), Execution::Sequential)?[0][1])
    }

    pub fn score_frames(
        &self,
        inputs: &[Frame],
        exec: Execution,
    ) -> Result<Vec<f64>, DetectorError> {
        Ok(self
            .forward(inputs, exec)?
            .into_iter()
            .map(|p| p[1])
            .collect())
    }

    /// Per-frame scores for a video, building detector inputs according to the
    /// model's input mode.
    pub fn score_video(
        &self,
        video: &VideoSequence,
        exec: Execution,
    ) -> Result<Vec<f64>, DetectorError> {
        match self.input_mode {
            InputMode::Transition => {
                let tr = transition_sequence_with(video, exec);
                self.score_frames(tr.frames(), exec)
            }
            InputMode::Original => self.score_frames(video.frames(), exec),
        }
    }

    /// Score every frame, flag frames at 0.5 and call the video adversarial
    /// when at least `threshold` frames are flagged. The elapsed time covers
    /// transition computation and inference.
    pub fn detect_video(
        &self,
        video: &VideoSequence,
        threshold: usize,
        exec: Execution,
    ) -> Result<DetectionReport, DetectorError> {
        if threshold == 0 {
            return Err(FrameError::ZeroThreshold.into());
        }
        let start = Instant::now();
        let scores = self.score_video(video, exec)?;
        let elapsed = start.elapsed().as_secs_f64();
        Ok(DetectionReport::from_scores(scores, threshold, elapsed)?)
    }
}
